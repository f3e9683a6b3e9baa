#include "thoughtmdp/core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tmdp {

namespace {
constexpr double kRowSumTol = 1e-12;
}

bool ThoughtMdp::is_terminal(int s) const {
    return std::find(terminals.begin(), terminals.end(), s) != terminals.end();
}

TabularPolicy TabularPolicy::make_deterministic(const ThoughtMdp& m, int fill_joint_action) {
    TabularPolicy p;
    p.deterministic = true;
    p.n_env_states = m.n_env_states;
    p.n_thought_states = m.n_thought_states;
    p.n_joint_actions = m.n_joint_actions();
    p.choice.assign(m.n_joint_states(), fill_joint_action);
    return p;
}

TabularPolicy TabularPolicy::make_uniform(const ThoughtMdp& m) {
    TabularPolicy p;
    p.deterministic = false;
    p.n_env_states = m.n_env_states;
    p.n_thought_states = m.n_thought_states;
    p.n_joint_actions = m.n_joint_actions();
    p.probs.assign(static_cast<size_t>(m.n_joint_states()) * m.n_joint_actions(),
                   1.0 / m.n_joint_actions());
    return p;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    os << "structural: " << (structural_ok ? "pass" : "FAIL")
       << ", assumption 1 (deterministic thought transitions): " << (assumption1_ok ? "pass" : "FAIL")
       << ", assumption 2 (non-negative rewards): " << (assumption2_ok ? "pass" : "FAIL")
       << ", assumption 3 (reachable positive reward): " << (assumption3_ok ? "pass" : "FAIL");
    for (const auto& i : issues) os << "\n  - " << i.detail;
    return os.str();
}

ValidationReport validate(const ThoughtMdp& m) {
    ValidationReport rep;
    auto structural = [&](std::string msg, int s = -1, int a = -1, int tau = -1, int c = -1) {
        rep.structural_ok = false;
        rep.issues.push_back({ValidationIssue::Kind::Structural, std::move(msg), s, a, tau, c});
    };

    const int S = m.n_env_states, T = m.n_thought_states;
    const int A = m.n_env_actions(), C = m.n_thought_actions();

    if (S <= 0) structural("n_env_states must be positive");
    if (T <= 0) structural("n_thought_states must be positive");
    if (A <= 0) structural("at least one env action required");
    if (!(m.gamma > 0.0 && m.gamma < 1.0)) structural("gamma must lie in (0, 1)");
    if (m.p.size() != static_cast<size_t>(S) * A * S) structural("p table has wrong size");
    if (m.r.size() != static_cast<size_t>(S) * A) structural("r table has wrong size");
    if (m.p_tau.size() != static_cast<size_t>(S) * T * C) structural("p_tau table has wrong size");
    for (int t : m.terminals)
        if (t < 0 || t >= S) structural("terminal index out of range", t);
    if (!rep.structural_ok) return rep;

    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) {
                double v = m.trans(s, a, s2);
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    structural("negative or non-finite transition probability", s, a);
                    return rep;
                }
                sum += v;
            }
            if (std::abs(sum - 1.0) > kRowSumTol) {
                std::ostringstream os;
                os << "transition row (s=" << s << ", a=" << a << ") sums to " << sum;
                structural(os.str(), s, a);
                return rep;
            }
        }
    }

    // Assumption 1: the table representation is deterministic by construction;
    // what remains checkable is that every (s, tau, c) names a valid successor.
    for (int s = 0; s < S && rep.assumption1_ok; ++s)
        for (int tau = 0; tau < T && rep.assumption1_ok; ++tau)
            for (int c = 0; c < C; ++c) {
                int nxt = m.thought_next(s, tau, c);
                if (nxt < 0 || nxt >= T) {
                    rep.assumption1_ok = false;
                    std::ostringstream os;
                    os << "thought transition (s=" << s << ", tau=" << tau << ", c=" << c
                       << ") maps outside T";
                    rep.issues.push_back({ValidationIssue::Kind::Assumption1, os.str(), s, -1, tau, c});
                    break;
                }
            }

    for (int s = 0; s < S && rep.assumption2_ok; ++s)
        for (int a = 0; a < A; ++a) {
            double rv = m.reward(s, a);
            if (!(rv >= 0.0) || !std::isfinite(rv)) {
                rep.assumption2_ok = false;
                std::ostringstream os;
                os << "reward (s=" << s << ", a=" << a << ") = " << rv << " violates r >= 0";
                rep.issues.push_back({ValidationIssue::Kind::Assumption2, os.str(), s, a});
                break;
            }
        }

    // Assumption 3: some positive-reward state must be reachable from every
    // non-terminal state, where reachability follows any action with nonzero
    // transition probability (BFS over the env-state graph).
    if (rep.assumption2_ok) {
        std::vector<char> positive(S, 0);
        bool any_positive = false;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                if (m.reward(s, a) > 0.0) { positive[s] = 1; any_positive = true; }

        if (!any_positive) {
            rep.assumption3_ok = false;
            rep.issues.push_back({ValidationIssue::Kind::Assumption3,
                                  "no (s, a) with positive reward exists"});
        } else {
            // reach[s]: set of states reachable from s (including s itself)
            for (int s0 = 0; s0 < S; ++s0) {
                if (m.is_terminal(s0)) continue;
                std::vector<char> seen(S, 0);
                std::deque<int> queue{s0};
                seen[s0] = 1;
                bool found = positive[s0];
                while (!queue.empty() && !found) {
                    int s = queue.front();
                    queue.pop_front();
                    for (int a = 0; a < A && !found; ++a)
                        for (int s2 = 0; s2 < S; ++s2)
                            if (!seen[s2] && m.trans(s, a, s2) > 0.0) {
                                seen[s2] = 1;
                                if (positive[s2]) { found = true; break; }
                                queue.push_back(s2);
                            }
                }
                if (!found) {
                    rep.assumption3_ok = false;
                    std::ostringstream os;
                    os << "no positive-reward state reachable from s=" << s0;
                    rep.issues.push_back({ValidationIssue::Kind::Assumption3, os.str(), s0});
                    break;
                }
            }
        }
    }
    return rep;
}

bool policy_valid_for(const TabularPolicy& policy, const ThoughtMdp& mdp, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (policy.n_env_states != mdp.n_env_states || policy.n_thought_states != mdp.n_thought_states ||
        policy.n_joint_actions != mdp.n_joint_actions())
        return fail("policy shape does not match MDP");
    const int JS = mdp.n_joint_states(), X = mdp.n_joint_actions();
    if (policy.deterministic) {
        if (static_cast<int>(policy.choice.size()) != JS) return fail("choice table has wrong size");
        for (int js = 0; js < JS; ++js)
            if (policy.choice[js] < 0 || policy.choice[js] >= X)
                return fail("joint action index out of range at js=" + std::to_string(js));
    } else {
        if (policy.probs.size() != static_cast<size_t>(JS) * X) return fail("probs table has wrong size");
        for (int js = 0; js < JS; ++js) {
            double sum = 0.0;
            for (int x = 0; x < X; ++x) {
                double v = policy.probs[static_cast<size_t>(js) * X + x];
                if (!(v >= 0.0)) return fail("negative probability at js=" + std::to_string(js));
                sum += v;
            }
            if (std::abs(sum - 1.0) > kRowSumTol)
                return fail("policy row js=" + std::to_string(js) + " sums to " + std::to_string(sum));
        }
    }
    return true;
}

namespace {
// Shared sampling rule: one uniform draw per step; rows with an exact 1.0
// entry still consume the draw so thought-MDP and flattened trajectories
// stay aligned under a shared seed.
int sample_row(const double* row, int n, Rng& rng) {
    double u = uniform01(rng);
    double cum = 0.0;
    int last = 0;
    for (int i = 0; i < n; ++i) {
        if (row[i] <= 0.0) continue;
        cum += row[i];
        last = i;
        if (u < cum) return i;
    }
    return last;
}
}  // namespace

StepResult step(const ThoughtMdp& mdp, JointState state, ActionRef action, Rng& rng) {
    if (mdp.is_terminal(state.env))
        throw std::logic_error("step: acting from a terminal joint state");
    StepResult out;
    double u_unused;
    if (action.kind == ActionKind::Env) {
        const double* row = &mdp.p[(static_cast<size_t>(state.env) * mdp.n_env_actions() + action.index) *
                                   mdp.n_env_states];
        out.next.env = sample_row(row, mdp.n_env_states, rng);
        out.next.thought = state.thought;
        out.reward = mdp.reward(state.env, action.index);
    } else {
        u_unused = uniform01(rng);  // keep one-draw-per-step parity with flat_step
        (void)u_unused;
        out.next.env = state.env;
        out.next.thought = mdp.thought_next(state.env, state.thought, action.index);
        out.reward = 0.0;
    }
    out.terminated = mdp.is_terminal(out.next.env);
    return out;
}

FlatMdp flatten(const ThoughtMdp& m) {
    FlatMdp f;
    const int S = m.n_env_states, T = m.n_thought_states;
    const int A = m.n_env_actions(), C = m.n_thought_actions();
    f.n_states = S * T;
    f.n_actions = A + C;
    f.gamma = m.gamma;
    f.p.assign(static_cast<size_t>(f.n_states) * f.n_actions * f.n_states, 0.0);
    f.r.assign(static_cast<size_t>(f.n_states) * f.n_actions, 0.0);
    f.terminal.assign(f.n_states, 0);

    for (int s = 0; s < S; ++s) {
        for (int tau = 0; tau < T; ++tau) {
            int js = m.joint_index(s, tau);
            if (m.is_terminal(s)) {
                f.terminal[js] = 1;
                for (int x = 0; x < f.n_actions; ++x)
                    f.p[(static_cast<size_t>(js) * f.n_actions + x) * f.n_states + js] = 1.0;
                continue;
            }
            for (int a = 0; a < A; ++a) {
                size_t base = (static_cast<size_t>(js) * f.n_actions + a) * f.n_states;
                for (int s2 = 0; s2 < S; ++s2)
                    f.p[base + m.joint_index(s2, tau)] = m.trans(s, a, s2);
                f.r[static_cast<size_t>(js) * f.n_actions + a] = m.reward(s, a);
            }
            for (int c = 0; c < C; ++c) {
                int js2 = m.joint_index(s, m.thought_next(s, tau, c));
                f.p[(static_cast<size_t>(js) * f.n_actions + A + c) * f.n_states + js2] = 1.0;
            }
        }
    }
    return f;
}

FlatStepResult flat_step(const FlatMdp& flat, int js, int x, Rng& rng) {
    const double* row = &flat.p[(static_cast<size_t>(js) * flat.n_actions + x) * flat.n_states];
    FlatStepResult out;
    out.next = sample_row(row, flat.n_states, rng);
    out.reward = flat.reward(js, x);
    out.terminated = flat.terminal[out.next] != 0;
    return out;
}

// ---------------------------------------------------------------------------
// JSON serialization

using nlohmann::json;

std::string to_json(const ThoughtMdp& m) {
    json j;
    j["n_env_states"] = m.n_env_states;
    j["n_thought_states"] = m.n_thought_states;
    j["env_actions"] = m.env_action_names;
    j["thought_actions"] = m.thought_action_names;
    j["gamma"] = m.gamma;
    j["terminals"] = m.terminals;
    j["p"] = m.p;
    j["r"] = m.r;
    j["p_tau"] = m.p_tau;
    return j.dump(2);
}

ThoughtMdp mdp_from_json(const std::string& text) {
    json j = json::parse(text);
    ThoughtMdp m;
    m.n_env_states = j.at("n_env_states").get<int>();
    m.n_thought_states = j.at("n_thought_states").get<int>();
    m.env_action_names = j.at("env_actions").get<std::vector<std::string>>();
    m.thought_action_names = j.at("thought_actions").get<std::vector<std::string>>();
    m.gamma = j.at("gamma").get<double>();
    m.terminals = j.at("terminals").get<std::vector<int>>();
    m.p = j.at("p").get<std::vector<double>>();
    m.r = j.at("r").get<std::vector<double>>();
    m.p_tau = j.at("p_tau").get<std::vector<int>>();
    ValidationReport rep = validate(m);
    if (!rep.ok())
        throw std::runtime_error("thought MDP failed validation on load:\n" + rep.summary());
    return m;
}

void save_mdp(const ThoughtMdp& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << to_json(m) << "\n";
}

ThoughtMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return mdp_from_json(ss.str());
}

std::string to_json(const TabularPolicy& p) {
    json j;
    j["type"] = p.deterministic ? "deterministic" : "stochastic";
    j["n_env_states"] = p.n_env_states;
    j["n_thought_states"] = p.n_thought_states;
    j["n_joint_actions"] = p.n_joint_actions;
    if (p.deterministic)
        j["choice"] = p.choice;
    else
        j["probs"] = p.probs;
    return j.dump(2);
}

TabularPolicy policy_from_json(const std::string& text) {
    json j = json::parse(text);
    TabularPolicy p;
    std::string type = j.at("type").get<std::string>();
    p.deterministic = type == "deterministic";
    if (!p.deterministic && type != "stochastic")
        throw std::runtime_error("policy type must be deterministic or stochastic");
    p.n_env_states = j.at("n_env_states").get<int>();
    p.n_thought_states = j.at("n_thought_states").get<int>();
    p.n_joint_actions = j.at("n_joint_actions").get<int>();
    if (p.deterministic)
        p.choice = j.at("choice").get<std::vector<int>>();
    else
        p.probs = j.at("probs").get<std::vector<double>>();
    return p;
}

void save_policy(const TabularPolicy& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << to_json(p) << "\n";
}

TabularPolicy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return policy_from_json(ss.str());
}

}  // namespace tmdp
