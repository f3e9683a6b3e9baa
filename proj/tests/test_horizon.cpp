#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "thoughtmdp/horizon.hpp"

using namespace tmdp;

TEST_SUITE_BEGIN("horizon");

namespace {
// exhaustive enumeration oracle: exact probability that forcing `forced`
// then following `policy` lands in a goal state by step T, summed over all
// action sequences weighted by the policy mixture
double enumerate_goal_prob(const GoalThoughtMdp& g, const TabularPolicy& pi, int s, int tau,
                           ActionRef forced, int T) {
    const ThoughtMdp& m = g.mdp;
    auto is_goal = [&](int env) {
        return std::find(g.goals.begin(), g.goals.end(), env) != g.goals.end();
    };
    struct Node { int s, tau, t; double w; };
    double total = 0.0;
    std::vector<Node> stack;
    // deterministic transitions only (campaign assumption); apply forced action
    auto apply = [&](int cs, int ctau, ActionRef a, int* ns, int* ntau) {
        if (a.kind == ActionKind::Env) {
            for (int s2 = 0; s2 < m.n_env_states; ++s2)
                if (m.trans(cs, a.index, s2) == 1.0) { *ns = s2; *ntau = ctau; return; }
            REQUIRE(false);
        } else {
            *ns = cs;
            *ntau = m.thought_next(cs, ctau, a.index);
        }
    };
    int s1, tau1;
    apply(s, tau, forced, &s1, &tau1);
    stack.push_back({s1, tau1, 1, 1.0});
    while (!stack.empty()) {
        Node n = stack.back();
        stack.pop_back();
        if (is_goal(n.s)) { total += n.w; continue; }
        if (n.t >= T) continue;
        for (int x = 0; x < m.n_joint_actions(); ++x) {
            double px = pi.prob(m.joint_index(n.s, n.tau), x);
            if (px == 0.0) continue;
            int ns, ntau;
            apply(n.s, n.tau, m.action_ref(x), &ns, &ntau);
            stack.push_back({ns, ntau, n.t + 1, n.w * px});
        }
    }
    return total;
}

TabularPolicy uniform_env_policy(const ThoughtMdp& m) {
    TabularPolicy pi = TabularPolicy::make_uniform(m);
    const int A = m.n_env_actions(), X = m.n_joint_actions();
    for (int js = 0; js < m.n_joint_states(); ++js)
        for (int x = 0; x < X; ++x)
            pi.probs[static_cast<size_t>(js) * X + x] = x < A ? 1.0 / A : 0.0;
    return pi;
}
}  // namespace

TEST_CASE("horizon bound: clamp, pinned value, monotonicity") {
    // inner ratio at or below 1 clamps the bound to 1
    CHECK(*horizon_bound(2, 1, std::min(1.0, std::log(2.0))) == 1.0);

    // pinned regression value: 1 + log_4(2 ln 20)
    double expected = 1.0 + std::log(std::log(20.0) / 0.5) / std::log(4.0);
    CHECK(*horizon_bound(4, 10, 0.5) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(*horizon_bound(4, 10, 0.5) == doctest::Approx(2.2914543485).epsilon(1e-8));

    // p = 0 reports undefined
    CHECK(!horizon_bound(4, 10, 0.0).has_value());

    // monotone decreasing in p, increasing in T
    double prev = 1e18;
    for (double p : {0.01, 0.05, 0.1, 0.3, 0.7, 1.0}) {
        double b = *horizon_bound(3, 50, p);
        CHECK(b < prev);
        prev = b;
    }
    prev = 0.0;
    for (int T : {1, 2, 8, 64, 512}) {
        double b = horizon_bound(3, T, 0.05).value();
        CHECK(b >= prev);
        prev = b;
    }
}

TEST_CASE("wilson interval brackets p_hat and stays inside [0, 1]") {
    double lo, hi;
    wilson_interval(0, 100, &lo, &hi);
    CHECK(lo == 0.0);
    CHECK(hi > 0.0);
    wilson_interval(100, 100, &lo, &hi);
    CHECK(hi == 1.0);
    wilson_interval(37, 100, &lo, &hi);
    CHECK(lo < 0.37);
    CHECK(hi > 0.37);
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
}

TEST_CASE("deterministic-goal rollout: success probability 1 within the horizon") {
    GoalThoughtMdp g = build_goal_chain(5);
    TabularPolicy right = TabularPolicy::make_deterministic(g.mdp, 1);
    Rng rng(3);
    HorizonEstimate est = estimate_goal_prob(g, right, 0, 0, {ActionKind::Env, 1}, 6, 500, rng);
    CHECK(est.p_hat == 1.0);
}

TEST_CASE("goal unreachable within the horizon: p_hat = 0 and no bound") {
    GoalThoughtMdp g = build_goal_chain(10);
    TabularPolicy uni = uniform_env_policy(g.mdp);
    Rng rng(4);
    HorizonEstimate est = estimate_goal_prob(g, uni, 0, 0, {ActionKind::Env, 1}, 3, 2000, rng);
    CHECK(est.p_hat == 0.0);
    CHECK(!est.bound.has_value());
}

TEST_CASE("estimate matches the exhaustive enumeration oracle within its CI") {
    GoalThoughtMdp g = build_goal_chain(4);
    TabularPolicy uni = uniform_env_policy(g.mdp);
    // frozen oracle value for (s=0, forced right, T=3): RR succeeds among
    // {RR, RL, LR, LL} 2-step continuations -> exactly 1/4
    double exact = enumerate_goal_prob(g, uni, 0, 0, {ActionKind::Env, 1}, 3);
    CHECK(exact == doctest::Approx(0.25).epsilon(1e-12));
    Rng rng(5);
    HorizonEstimate est = estimate_goal_prob(g, uni, 0, 0, {ActionKind::Env, 1}, 3, 20000, rng);
    CHECK(est.ci_low <= exact);
    CHECK(est.ci_high >= exact);

    // another start/action pair against the oracle
    double exact2 = enumerate_goal_prob(g, uni, 1, 0, {ActionKind::Env, 0}, 4);
    Rng rng2(6);
    HorizonEstimate est2 = estimate_goal_prob(g, uni, 1, 0, {ActionKind::Env, 0}, 4, 20000, rng2);
    CHECK(est2.ci_low <= exact2);
    CHECK(est2.ci_high >= exact2);
}

TEST_CASE("quadrupling rollouts roughly halves the CI width") {
    GoalThoughtMdp g = build_goal_chain(4);
    TabularPolicy uni = uniform_env_policy(g.mdp);
    Rng rng1(7), rng2(7);
    HorizonEstimate a = estimate_goal_prob(g, uni, 0, 0, {ActionKind::Env, 1}, 3, 4000, rng1);
    HorizonEstimate b = estimate_goal_prob(g, uni, 0, 0, {ActionKind::Env, 1}, 3, 16000, rng2);
    CHECK((b.ci_high - b.ci_low) < (a.ci_high - a.ci_low) * 0.7);
}

TEST_CASE("proposition 2 arithmetic") {
    Prop2Record yes = proposition2_compare(0.1, 0.9, 0.5);
    CHECK(yes.reduced);
    CHECK(yes.effective_lower == doctest::Approx(0.45));
    Prop2Record no = proposition2_compare(0.1, 0.9, 0.01);
    CHECK(!no.reduced);
    CHECK(no.effective_lower == doctest::Approx(0.1));
    CHECK_THROWS(proposition2_compare(0.0, 0.9, 0.5));
}

TEST_CASE("discovery campaign: thought actions cut the bound and the measured sample counts") {
    DiscoveryCampaignResult res = run_discovery_campaign(10, 20, 60, 4000, 99);
    CHECK(res.record.reduced);
    REQUIRE(res.record.bound_with.has_value());
    REQUIRE(res.record.bound_without.has_value());
    CHECK(*res.record.bound_with < *res.record.bound_without);
    CHECK(res.thought_arm_lower);
    CHECK(res.thought_arm.ci_high < res.base_arm.ci_low);
    // measured p's respect the premise pc * p1 > p0
    CHECK(res.pc * res.p1_est.p_hat > res.p0_est.p_hat);
}

TEST_CASE("goal MDP construction rejects malformed reward structures") {
    GoalThoughtMdp g = build_goal_chain(5);
    ThoughtMdp broken = g.mdp;
    broken.r[0] = 0.5;
    CHECK_THROWS(make_goal_thought_mdp(broken));
}

TEST_SUITE_END();
