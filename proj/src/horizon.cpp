#include "thoughtmdp/horizon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tmdp {

namespace {
constexpr double kZ95 = 1.959963984540054;

int sample_policy_action(const TabularPolicy& pi, int js, Rng& rng) {
    if (pi.deterministic) return pi.at(js);
    double u = uniform01(rng);
    double cum = 0.0;
    int last = 0;
    for (int x = 0; x < pi.n_joint_actions; ++x) {
        double p = pi.probs[static_cast<size_t>(js) * pi.n_joint_actions + x];
        if (p <= 0.0) continue;
        cum += p;
        last = x;
        if (u < cum) return x;
    }
    return last;
}
}  // namespace

GoalThoughtMdp make_goal_thought_mdp(ThoughtMdp mdp) {
    GoalThoughtMdp g;
    const int S = mdp.n_env_states, A = mdp.n_env_actions();
    for (int s = 0; s < S; ++s) {
        bool all_one = true, any_one = false;
        for (int a = 0; a < A; ++a) {
            double r = mdp.reward(s, a);
            if (r == 1.0) any_one = true;
            else if (r != 0.0)
                throw std::invalid_argument("goal thought MDP rewards must be exactly 0 or 1");
            if (r != 1.0) all_one = false;
        }
        if (any_one && !all_one)
            throw std::invalid_argument("goal state must pay 1 under every env action");
        if (all_one) {
            for (int a = 0; a < A; ++a)
                if (mdp.trans(s, a, s) != 1.0)
                    throw std::invalid_argument("goal states must be absorbing");
            g.goals.push_back(s);
        }
    }
    if (g.goals.empty()) throw std::invalid_argument("goal thought MDP has no goal states");
    g.mdp = std::move(mdp);
    return g;
}

GoalThoughtMdp build_goal_chain(int n, double discount) {
    if (n < 2) throw std::invalid_argument("build_goal_chain: need at least 2 env states");
    ThoughtMdp m;
    m.n_env_states = n;
    m.n_thought_states = 2;
    m.env_action_names = {"left", "right"};
    m.thought_action_names = {"up", "down"};
    m.gamma = discount;
    m.p.assign(static_cast<size_t>(n) * 2 * n, 0.0);
    m.r.assign(static_cast<size_t>(n) * 2, 0.0);
    m.p_tau.assign(static_cast<size_t>(n) * 2 * 2, 0);
    for (int s = 0; s < n; ++s) {
        if (s == n - 1) {
            m.p[(static_cast<size_t>(s) * 2 + 0) * n + s] = 1.0;
            m.p[(static_cast<size_t>(s) * 2 + 1) * n + s] = 1.0;
            m.r[static_cast<size_t>(s) * 2 + 0] = 1.0;
            m.r[static_cast<size_t>(s) * 2 + 1] = 1.0;
        } else {
            m.p[(static_cast<size_t>(s) * 2 + 0) * n + std::max(0, s - 1)] = 1.0;
            m.p[(static_cast<size_t>(s) * 2 + 1) * n + (s + 1)] = 1.0;
        }
        m.p_tau[(static_cast<size_t>(s) * 2 + 0) * 2 + 0] = 1;  // up from τ0
        m.p_tau[(static_cast<size_t>(s) * 2 + 1) * 2 + 0] = 1;
        m.p_tau[(static_cast<size_t>(s) * 2 + 0) * 2 + 1] = 0;  // down
        m.p_tau[(static_cast<size_t>(s) * 2 + 1) * 2 + 1] = 0;
    }
    return make_goal_thought_mdp(std::move(m));
}

void wilson_interval(long k, long n, double* lo, double* hi) {
    if (n <= 0) { *lo = *hi = 0.0; return; }
    double p = static_cast<double>(k) / n;
    double z2 = kZ95 * kZ95;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    *lo = k == 0 ? 0.0 : std::max(0.0, center - half);
    *hi = k == n ? 1.0 : std::min(1.0, center + half);
}

HorizonEstimate estimate_goal_prob(const GoalThoughtMdp& gmdp, const TabularPolicy& policy, int s,
                                   int tau, ActionRef action, int horizon_T, long n_rollouts,
                                   Rng& rng) {
    if (horizon_T < 1) throw std::invalid_argument("estimate_goal_prob: horizon_T must be >= 1");
    if (n_rollouts < 1) throw std::invalid_argument("estimate_goal_prob: n_rollouts must be >= 1");
    const ThoughtMdp& m = gmdp.mdp;
    std::vector<char> is_goal(m.n_env_states, 0);
    for (int g : gmdp.goals) is_goal[g] = 1;

    long hits = 0;
    for (long i = 0; i < n_rollouts; ++i) {
        JointState st{s, tau};
        StepResult sr = step(m, st, action, rng);
        st = sr.next;
        bool found = is_goal[st.env] != 0;  // goals absorb, so "ever" equals "at T"
        for (int t = 1; t < horizon_T && !found; ++t) {
            int x = sample_policy_action(policy, m.joint_index(st.env, st.thought), rng);
            sr = step(m, st, m.action_ref(x), rng);
            st = sr.next;
            found = is_goal[st.env] != 0;
        }
        if (found) ++hits;
    }

    HorizonEstimate est;
    est.n_rollouts = n_rollouts;
    est.p_hat = static_cast<double>(hits) / n_rollouts;
    wilson_interval(hits, n_rollouts, &est.ci_low, &est.ci_high);
    est.bound = horizon_bound(m.n_joint_actions(), horizon_T, est.p_hat);
    return est;
}

std::optional<double> horizon_bound(int n_actions, int horizon_T, double p) {
    if (n_actions < 2) throw std::invalid_argument("horizon_bound: need at least 2 actions");
    if (horizon_T < 1) throw std::invalid_argument("horizon_bound: horizon_T must be >= 1");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("horizon_bound: p must lie in [0, 1]");
    if (p == 0.0) return std::nullopt;
    double inner = std::log(2.0 * horizon_T) / p;
    if (inner <= 1.0) return 1.0;
    return 1.0 + std::log(inner) / std::log(static_cast<double>(n_actions));
}

Prop2Record proposition2_compare(double p0, double p1, double pc, int n_env_actions,
                                 int n_thought_actions, int horizon_T) {
    for (double v : {p0, p1, pc})
        if (!(v > 0.0 && v <= 1.0))
            throw std::invalid_argument("proposition2_compare: probabilities must lie in (0, 1]");
    Prop2Record rec;
    rec.p0 = p0;
    rec.p1 = p1;
    rec.pc = pc;
    rec.effective_lower = std::max(p0, pc * p1);
    rec.reduced = pc * p1 > p0;
    rec.bound_without = horizon_bound(n_env_actions, horizon_T, p0);
    rec.bound_with =
        horizon_bound(n_env_actions + n_thought_actions, horizon_T, rec.effective_lower);
    return rec;
}

namespace {

// Stochastic initialization used by the discovery campaign: the τ0 sub-policy
// drifts away from the goal, the τ1 sub-policy drifts toward it, and pc mass
// at τ0 goes to the thought action switching up to τ1.
TabularPolicy discovery_policy(const ThoughtMdp& m, double pc) {
    TabularPolicy pi = TabularPolicy::make_uniform(m);
    const int A = m.n_env_actions(), X = m.n_joint_actions();
    for (int s = 0; s < m.n_env_states; ++s) {
        int js0 = m.joint_index(s, 0), js1 = m.joint_index(s, 1);
        // τ0: mostly left, a little right, pc on "up"
        pi.probs[static_cast<size_t>(js0) * X + 0] = 0.45;
        pi.probs[static_cast<size_t>(js0) * X + 1] = 1.0 - 0.45 - pc;
        pi.probs[static_cast<size_t>(js0) * X + A + 0] = pc;
        pi.probs[static_cast<size_t>(js0) * X + A + 1] = 0.0;
        // τ1: mostly right
        pi.probs[static_cast<size_t>(js1) * X + 0] = 0.1;
        pi.probs[static_cast<size_t>(js1) * X + 1] = 0.9;
        pi.probs[static_cast<size_t>(js1) * X + A + 0] = 0.0;
        pi.probs[static_cast<size_t>(js1) * X + A + 1] = 0.0;
    }
    return pi;
}

// π(τ0) with thought mass removed and renormalized over env actions.
TabularPolicy strip_thoughts(const ThoughtMdp& m, const TabularPolicy& pi) {
    TabularPolicy out = pi;
    const int A = m.n_env_actions(), X = m.n_joint_actions();
    for (int js = 0; js < m.n_joint_states(); ++js) {
        double env_mass = 0.0;
        for (int a = 0; a < A; ++a) env_mass += pi.probs[static_cast<size_t>(js) * X + a];
        for (int x = 0; x < X; ++x) {
            double v = x < A && env_mass > 0.0 ? pi.probs[static_cast<size_t>(js) * X + x] / env_mass
                                               : 0.0;
            out.probs[static_cast<size_t>(js) * X + x] = v;
        }
    }
    return out;
}

bool rollout_finds_goal(const GoalThoughtMdp& g, const TabularPolicy& pi, int s, int tau, int T,
                        Rng& rng) {
    const ThoughtMdp& m = g.mdp;
    JointState st{s, tau};
    for (int t = 0; t < T; ++t) {
        int x = sample_policy_action(pi, m.joint_index(st.env, st.thought), rng);
        StepResult sr = step(m, st, m.action_ref(x), rng);
        st = sr.next;
        if (std::find(g.goals.begin(), g.goals.end(), st.env) != g.goals.end()) return true;
    }
    return false;
}

DiscoveryArmStats count_stats(const std::vector<int>& counts, int budget) {
    DiscoveryArmStats st;
    double sum = 0.0;
    for (int c : counts) {
        sum += c;
        if (c >= budget) ++st.censored;
    }
    st.mean_count = sum / counts.size();
    double var = 0.0;
    for (int c : counts) var += (c - st.mean_count) * (c - st.mean_count);
    var /= std::max<size_t>(1, counts.size() - 1);
    double half = kZ95 * std::sqrt(var / counts.size());
    st.ci_low = st.mean_count - half;
    st.ci_high = st.mean_count + half;
    return st;
}

}  // namespace

DiscoveryCampaignResult run_discovery_campaign(int n_env_states, int horizon_T, int reps,
                                               int budget, uint64_t seed) {
    GoalThoughtMdp g = build_goal_chain(n_env_states);
    const double pc = 0.25;
    TabularPolicy with_thoughts = discovery_policy(g.mdp, pc);
    TabularPolicy base = strip_thoughts(g.mdp, with_thoughts);

    DiscoveryCampaignResult res;
    res.pc = pc;

    // Measured per-rollout goal probabilities from the hardest start (s=0, τ0).
    {
        Rng rng(derive_seed(seed, 1));
        res.p0_est = estimate_goal_prob(g, base, 0, 0, {ActionKind::Env, 1}, horizon_T, 200000, rng);
    }
    {
        Rng rng(derive_seed(seed, 2));
        res.p1_est = estimate_goal_prob(g, with_thoughts, 0, 1, {ActionKind::Env, 1}, horizon_T,
                                        200000, rng);
    }

    // Paired arms: rep i of each arm draws from the same derived stream id,
    // so the comparison shares seeds.
    std::vector<int> base_counts(reps), thought_counts(reps);
    for (int i = 0; i < reps; ++i) {
        Rng rng_a(derive_seed(seed, 3, i));
        int n = 0;
        while (n < budget && !rollout_finds_goal(g, base, 0, 0, horizon_T, rng_a)) ++n;
        base_counts[i] = std::min(budget, n + 1);

        Rng rng_b(derive_seed(seed, 3, i));
        n = 0;
        while (n < budget && !rollout_finds_goal(g, with_thoughts, 0, 0, horizon_T, rng_b)) ++n;
        thought_counts[i] = std::min(budget, n + 1);
    }
    res.base_arm = count_stats(base_counts, budget);
    res.thought_arm = count_stats(thought_counts, budget);
    res.record = proposition2_compare(std::max(res.p0_est.p_hat, 1e-9),
                                      std::max(res.p1_est.p_hat, 1e-9), pc,
                                      g.mdp.n_env_actions(), g.mdp.n_thought_actions(), horizon_T);
    res.thought_arm_lower = res.thought_arm.ci_high < res.base_arm.ci_low;
    return res;
}

std::string horizon_estimate_json(const GoalThoughtMdp& gmdp, const TabularPolicy& policy, int s,
                                  int tau, int horizon_T, long n_rollouts, uint64_t seed) {
    nlohmann::json j;
    j["s"] = s;
    j["tau"] = tau;
    j["horizon_T"] = horizon_T;
    j["n_rollouts"] = n_rollouts;
    j["seed"] = seed;
    j["goals"] = gmdp.goals;
    // The bound uses natural logs and counts the full acted-upon action set
    // A ∪ C; declared here rather than assumed by readers.
    j["metadata"] = {{"log_base", "natural"},
                     {"action_count", gmdp.mdp.n_joint_actions()},
                     {"action_count_includes_thought_actions", true},
                     {"interval", "wilson-95"}};
    nlohmann::json arr = nlohmann::json::array();
    for (int x = 0; x < gmdp.mdp.n_joint_actions(); ++x) {
        ActionRef a = gmdp.mdp.action_ref(x);
        Rng rng(derive_seed(seed, 100 + x));
        HorizonEstimate est = estimate_goal_prob(gmdp, policy, s, tau, a, horizon_T, n_rollouts, rng);
        nlohmann::json rec;
        rec["action_kind"] = a.kind == ActionKind::Env ? "env" : "thought";
        rec["action_index"] = a.index;
        rec["action_name"] = a.kind == ActionKind::Env ? gmdp.mdp.env_action_names[a.index]
                                                       : gmdp.mdp.thought_action_names[a.index];
        rec["p_hat"] = est.p_hat;
        rec["ci_low"] = est.ci_low;
        rec["ci_high"] = est.ci_high;
        if (est.bound)
            rec["bound"] = *est.bound;
        else
            rec["bound"] = "undefined";
        arr.push_back(rec);
    }
    j["estimates"] = arr;
    return j.dump(2);
}

}  // namespace tmdp
