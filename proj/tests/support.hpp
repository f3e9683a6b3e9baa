#pragma once

#include <stdexcept>
#include <vector>

#include "thoughtmdp/core.hpp"
#include "thoughtmdp/rng.hpp"

namespace tmdp::testing {

struct RandomMdpSpec {
    int max_env_states = 6;
    int max_thought_states = 3;
    int max_env_actions = 3;
    int max_thought_actions = 2;
    bool allow_terminal = true;
};

// Random validated thought MDP: stochastic transition rows, sparse positive
// rewards, random deterministic thought table. Rejection-samples until the
// instance passes validate(), so every caller sees assumption-satisfying
// instances. Deterministic given the seed.
inline ThoughtMdp random_thought_mdp(uint64_t seed, const RandomMdpSpec& spec = {}) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 200; ++attempt) {
        ThoughtMdp m;
        m.n_env_states = 2 + uniform_int(rng, spec.max_env_states - 1);
        m.n_thought_states = 1 + uniform_int(rng, spec.max_thought_states);
        int n_env_actions = 1 + uniform_int(rng, spec.max_env_actions);
        int n_thought_actions = uniform_int(rng, spec.max_thought_actions + 1);
        for (int a = 0; a < n_env_actions; ++a) m.env_action_names.push_back("a" + std::to_string(a));
        for (int c = 0; c < n_thought_actions; ++c)
            m.thought_action_names.push_back("c" + std::to_string(c));
        m.gamma = 0.5 + 0.45 * uniform01(rng);

        const int S = m.n_env_states, A = n_env_actions, T = m.n_thought_states;
        m.p.assign(static_cast<size_t>(S) * A * S, 0.0);
        m.r.assign(static_cast<size_t>(S) * A, 0.0);
        m.p_tau.assign(static_cast<size_t>(S) * T * n_thought_actions, 0);

        if (spec.allow_terminal && uniform01(rng) < 0.5) m.terminals = {uniform_int(rng, S)};

        for (int s = 0; s < S; ++s) {
            bool term = m.is_terminal(s);
            for (int a = 0; a < A; ++a) {
                size_t base = (static_cast<size_t>(s) * A + a) * S;
                if (term) {
                    m.p[base + s] = 1.0;  // absorbing, zero reward
                    continue;
                }
                // sparse stochastic row over ~3 successors
                double total = 0.0;
                std::vector<double> w(S, 0.0);
                for (int k = 0; k < 3; ++k) {
                    int s2 = uniform_int(rng, S);
                    double v = 0.05 + uniform01(rng);
                    w[s2] += v;
                    total += v;
                }
                for (int s2 = 0; s2 < S; ++s2) m.p[base + s2] = w[s2] / total;
                // renormalize exactly
                double sum = 0.0;
                for (int s2 = 0; s2 < S; ++s2) sum += m.p[base + s2];
                m.p[base + S - 1] += 1.0 - sum;
                if (uniform01(rng) < 0.3) m.r[static_cast<size_t>(s) * A + a] = 0.1 + uniform01(rng);
            }
            for (int tau = 0; tau < T; ++tau)
                for (int c = 0; c < n_thought_actions; ++c)
                    m.p_tau[(static_cast<size_t>(s) * T + tau) * n_thought_actions + c] =
                        uniform_int(rng, T);
        }
        if (validate(m).ok()) return m;
    }
    throw std::runtime_error("random_thought_mdp: rejection sampling failed");
}

// Random deterministic policy for an MDP.
inline TabularPolicy random_policy(const ThoughtMdp& m, uint64_t seed) {
    Rng rng(seed);
    TabularPolicy p = TabularPolicy::make_deterministic(m, 0);
    for (int js = 0; js < m.n_joint_states(); ++js) p.set(js, uniform_int(rng, m.n_joint_actions()));
    return p;
}

}  // namespace tmdp::testing
