#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "thoughtmdp/core.hpp"

namespace tmdp {

// v(s, tau) for every joint state. Terminal rows are pinned to 0 rather than
// solved, which keeps the evaluation linear systems nonsingular.
struct ValueTable {
    int n_env_states = 0;
    int n_thought_states = 0;
    std::vector<double> v;  // [s * nT + tau]

    double at(int s, int tau) const { return v[static_cast<size_t>(s) * n_thought_states + tau]; }
    double& at(int s, int tau) { return v[static_cast<size_t>(s) * n_thought_states + tau]; }
    double at_joint(int js) const { return v[js]; }
};

enum class EvalBackend {
    Iterative,    // Bellman expectation sweeps to sup-norm tolerance
    ExactLinear,  // sparse direct solve of (I - γ P_π) v = r_π
};

// Exact policy evaluation on the flattened MDP. Iterative sweeps that fail
// to reach `tolerance` within `max_sweeps` throw rather than return silently.
ValueTable evaluate_policy(const ThoughtMdp& mdp, const TabularPolicy& policy,
                           double tolerance = 1e-10,
                           EvalBackend backend = EvalBackend::Iterative,
                           long max_sweeps = 100000);

// q_π(s, τ, x) for every joint action, env actions first then thought
// actions:  q = r(s,x) + γ E[v(s', τ)] for x ∈ A,  q = γ v(s, τ') for x ∈ C.
// Terminal joint states yield an all-zero vector.
std::vector<double> q_values(const ThoughtMdp& mdp, const ValueTable& values, int s, int tau);

enum class TieBreak {
    // Argmax with ties resolved toward env actions, then lowest index.
    // Thinking is never selected out of indifference.
    PreferEnv,
    // Keep the incumbent action unless strictly beaten. This is the rule
    // that spreads the chain's thought-to-act frontier one state per
    // iteration; exact act-then-think/think-then-act value ties otherwise
    // collapse the progression.
    PreferIncumbent,
};

// Greedy improvement against `values`. `incumbent` is required for
// PreferIncumbent and used only for tie handling otherwise. Comparisons use
// an absolute tolerance so solver round-off cannot decide a tie.
TabularPolicy improve(const ThoughtMdp& mdp, const ValueTable& values,
                      TieBreak tie_break = TieBreak::PreferEnv,
                      const TabularPolicy* incumbent = nullptr,
                      double tie_tol = 1e-9);

struct ImprovementEvent {
    int s = 0, tau = 0;
    ActionRef old_action;
    ActionRef new_action;
    std::vector<double> q;  // q-vector at the moment of improvement
};

struct IterationSnapshot {
    TabularPolicy policy;
    ValueTable values;                     // evaluation of this snapshot's policy
    std::vector<ImprovementEvent> events;  // cells changed relative to the previous snapshot
};

// Snapshot 0 is the initial policy; snapshot k is the policy after k
// completed improvement steps (the convention noted in CSV headers).
struct IterationTrace {
    std::vector<IterationSnapshot> snapshots;
    int improvement_steps() const { return static_cast<int>(snapshots.size()) - 1; }
};

struct MonitorViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PolicyIterationOptions {
    int max_iters = 1000;
    double tolerance = 1e-10;
    bool monitor = true;
    TieBreak tie_break = TieBreak::PreferEnv;
    EvalBackend backend = EvalBackend::Iterative;
    double tie_tol = 1e-9;
    bool keep_trace = true;
};

struct PolicyIterationResult {
    TabularPolicy policy;
    ValueTable values;
    IterationTrace trace;
    bool converged = false;
    int iterations = 0;  // completed improvement steps, including the final no-change one
};

// Exact policy iteration with optional monitors:
//  - whenever an improvement step switches a cell from an env action to a
//    thought action c with successor τ', the pre-improvement values must
//    satisfy v(s, τ') > v(s, τ);
//  - two such switches chained through τ → τ' → τ'' in the same iteration
//    must satisfy v(s, τ'') > v(s, τ') > v(s, τ).
// A monitor violation throws MonitorViolation naming the cell: both
// statements are unconditional, so a trip indicates an implementation bug.
PolicyIterationResult policy_iteration(const ThoughtMdp& mdp, const TabularPolicy& init_policy,
                                       const PolicyIterationOptions& opts = {});

struct ThoughtOptimalityReport {
    bool pass = true;
    std::vector<JointState> violations;  // non-terminal cells selecting a thought action
};

// Converged policies must act, not think: checks that the policy selects an
// env action at every non-terminal joint state.
ThoughtOptimalityReport verify_no_thought_optimal(const ThoughtMdp& mdp, const TabularPolicy& policy);

// One row per joint state per iteration: iteration, s, tau, action_kind,
// action_index, value.
void write_trace_csv(const ThoughtMdp& mdp, const IterationTrace& trace, std::ostream& out);

}  // namespace tmdp
