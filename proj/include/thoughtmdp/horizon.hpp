#pragma once

#include <optional>
#include <string>
#include <vector>

#include "thoughtmdp/core.hpp"

namespace tmdp {

// Thought MDP whose reward is 1 exactly on a set of absorbing goal env
// states and 0 elsewhere. Goal states absorb but are not terminals, so
// rollouts keep running to the horizon and "in a goal state at step T" is
// equivalent to "discovered a goal by step T".
struct GoalThoughtMdp {
    ThoughtMdp mdp;
    std::vector<int> goals;
};

// Reads the goal set off the reward structure (states where every env
// action pays 1) and checks the definition: r(s,a) = 1 iff s is a goal,
// goals absorbing under every action. Throws if the structure does not fit.
GoalThoughtMdp make_goal_thought_mdp(ThoughtMdp mdp);

// Chain-shaped goal thought MDP: same lattice moves as the chain example but
// with the rightmost state an absorbing goal paying 1 per step.
GoalThoughtMdp build_goal_chain(int n_env_states, double discount = 0.9);

struct HorizonEstimate {
    double p_hat = 0.0;
    double ci_low = 0.0;   // Wilson 95% bounds
    double ci_high = 0.0;
    long n_rollouts = 0;
    std::optional<double> bound;  // effective-horizon upper bound; empty when p_hat = 0
};

// Fraction of rollouts that, after forcing `action` at (s, tau) and then
// following `policy`, occupy a goal state by step T. Deterministic given the
// seed of `rng`.
HorizonEstimate estimate_goal_prob(const GoalThoughtMdp& gmdp, const TabularPolicy& policy, int s,
                                   int tau, ActionRef action, int horizon_T, long n_rollouts,
                                   Rng& rng);

// Effective-horizon upper bound 1 + log_|A|(log(2T) / p) with natural logs,
// clamped below at 1 when the inner ratio drops to or below 1. p = 0 has no
// finite bound and reports empty instead of a numeric artifact.
std::optional<double> horizon_bound(int n_actions, int horizon_T, double p);

// Wilson score interval with z for 95% coverage.
void wilson_interval(long successes, long n, double* lo, double* hi);

struct Prop2Record {
    double p0 = 0.0, p1 = 0.0, pc = 0.0;
    double effective_lower = 0.0;     // max(p0, pc * p1)
    bool reduced = false;             // pc * p1 > p0
    std::optional<double> bound_without;  // horizon_bound(|A|, T, p0)
    std::optional<double> bound_with;     // horizon_bound(|A|+|C|, T, max(p0, pc*p1))
};

Prop2Record proposition2_compare(double p0, double p1, double pc, int n_env_actions = 2,
                                 int n_thought_actions = 2, int horizon_T = 20);

// Two-arm goal-discovery campaign on a deterministic goal chain. The base
// arm follows the sub-policy π(τ0) restricted to env actions; the thought arm
// keeps probability pc on the thought action that switches to τ1. Shared
// seed streams pair the arms rep for rep; counts are rollouts until the
// first goal discovery (censored at `budget`).
struct DiscoveryArmStats {
    double mean_count = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // normal-approx 95% on the mean
    int censored = 0;
};

struct DiscoveryCampaignResult {
    DiscoveryArmStats base_arm;
    DiscoveryArmStats thought_arm;
    HorizonEstimate p0_est, p1_est;  // measured arm success probabilities per rollout
    double pc = 0.0;
    Prop2Record record;
    bool thought_arm_lower = false;  // CI-separated reduction in sample counts
};

DiscoveryCampaignResult run_discovery_campaign(int n_env_states, int horizon_T, int reps,
                                               int budget, uint64_t seed);

// JSON record of per-action estimates and bounds from one start state; the
// payload behind `horizon estimate`. Metadata declares the natural-log
// convention and that the action count includes thought actions.
std::string horizon_estimate_json(const GoalThoughtMdp& gmdp, const TabularPolicy& policy, int s,
                                  int tau, int horizon_T, long n_rollouts, uint64_t seed);

}  // namespace tmdp
