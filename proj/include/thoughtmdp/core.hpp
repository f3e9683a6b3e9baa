#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "thoughtmdp/rng.hpp"

namespace tmdp {

enum class ActionKind { Env, Thought };

// Reference to one action, either from the environment action set or the
// thought action set. The joint action ordering used everywhere (q-vectors,
// stochastic policy rows, flattened MDPs) is env actions first, then thought
// actions.
struct ActionRef {
    ActionKind kind = ActionKind::Env;
    int index = 0;

    bool operator==(const ActionRef&) const = default;
};

struct JointState {
    int env = 0;
    int thought = 0;

    bool operator==(const JointState&) const = default;
};

// Tabular thought MDP: a finite MDP ⟨S, A, p, r, γ⟩ extended with thought
// states, thought actions and a deterministic thought transition table.
// Thought actions never change the environment state and never pay reward.
//
// Treat instances as immutable once constructed; all solver entry points
// take const references and share freely across threads.
struct ThoughtMdp {
    int n_env_states = 0;
    int n_thought_states = 0;
    std::vector<std::string> env_action_names;
    std::vector<std::string> thought_action_names;

    // dense row-major tables
    std::vector<double> p;      // [(s * nA + a) * nS + s'] transition probability
    std::vector<double> r;      // [s * nA + a]
    std::vector<int> p_tau;     // [(s * nT + tau) * nC + c] -> tau'
    double gamma = 0.9;
    std::vector<int> terminals; // env state indices, absorbing with zero reward

    int n_env_actions() const { return static_cast<int>(env_action_names.size()); }
    int n_thought_actions() const { return static_cast<int>(thought_action_names.size()); }
    int n_joint_states() const { return n_env_states * n_thought_states; }
    int n_joint_actions() const { return n_env_actions() + n_thought_actions(); }

    int joint_index(int s, int tau) const { return s * n_thought_states + tau; }
    JointState joint_state(int js) const {
        return {js / n_thought_states, js % n_thought_states};
    }

    double trans(int s, int a, int s2) const {
        return p[(static_cast<size_t>(s) * n_env_actions() + a) * n_env_states + s2];
    }
    double reward(int s, int a) const { return r[static_cast<size_t>(s) * n_env_actions() + a]; }
    int thought_next(int s, int tau, int c) const {
        return p_tau[(static_cast<size_t>(s) * n_thought_states + tau) * n_thought_actions() + c];
    }
    bool is_terminal(int s) const;

    // joint action index <-> ActionRef (env first, then thought)
    ActionRef action_ref(int joint_action) const {
        if (joint_action < n_env_actions()) return {ActionKind::Env, joint_action};
        return {ActionKind::Thought, joint_action - n_env_actions()};
    }
    int joint_action(ActionRef a) const {
        return a.kind == ActionKind::Env ? a.index : n_env_actions() + a.index;
    }
};

// Policy over joint states. Deterministic policies store one joint action
// index per (s, tau); stochastic policies store a dense probability row over
// A ∪ C per (s, tau). Rows are indexed js = s * nT + tau.
struct TabularPolicy {
    bool deterministic = true;
    int n_env_states = 0;
    int n_thought_states = 0;
    int n_joint_actions = 0;
    std::vector<int> choice;     // deterministic: [js] -> joint action
    std::vector<double> probs;   // stochastic: [js * nJA + x]

    static TabularPolicy make_deterministic(const ThoughtMdp& m, int fill_joint_action = 0);
    static TabularPolicy make_uniform(const ThoughtMdp& m);

    int n_joint_states() const { return n_env_states * n_thought_states; }
    int at(int js) const { return choice[js]; }
    double prob(int js, int x) const {
        return deterministic ? (choice[js] == x ? 1.0 : 0.0)
                             : probs[static_cast<size_t>(js) * n_joint_actions + x];
    }
    void set(int js, int joint_action) { choice[js] = joint_action; }

    bool operator==(const TabularPolicy&) const = default;
};

// Validation findings, split into structural table problems and violations
// of the three analysis assumptions (deterministic thought transitions,
// non-negative rewards, reachable positive reward).
struct ValidationIssue {
    enum class Kind { Structural, Assumption1, Assumption2, Assumption3 };
    Kind kind;
    std::string detail;
    int s = -1, a = -1, tau = -1, c = -1;
};

struct ValidationReport {
    bool structural_ok = true;
    bool assumption1_ok = true;  // deterministic thought transitions (range-valid table)
    bool assumption2_ok = true;  // non-negative rewards
    bool assumption3_ok = true;  // reachable positive reward
    std::vector<ValidationIssue> issues;

    bool ok() const { return structural_ok && assumption1_ok && assumption2_ok && assumption3_ok; }
    std::string summary() const;
};

ValidationReport validate(const ThoughtMdp& mdp);

// Checks a policy's shape against an MDP: row sums within 1e-12 for
// stochastic rows, in-range joint action indices for deterministic ones.
bool policy_valid_for(const TabularPolicy& policy, const ThoughtMdp& mdp, std::string* why = nullptr);

struct StepResult {
    JointState next;
    double reward = 0.0;
    bool terminated = false;
};

// One interaction step. Env actions move the environment state and pay
// r(s, a) while the thought state rides along; thought actions advance the
// thought state, leave the environment untouched and pay 0.
// Exactly one uniform draw is consumed per call, matching the flattened
// sampler so that shared-seed trajectories align step for step.
StepResult step(const ThoughtMdp& mdp, JointState state, ActionRef action, Rng& rng);

// Flattened view: a standard tabular MDP over S × T with action set A ∪ C.
struct FlatMdp {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.9;
    std::vector<double> p;       // [(js * nX + x) * nJS + js']
    std::vector<double> r;       // [js * nX + x]
    std::vector<char> terminal;  // [js]

    double trans(int js, int x, int js2) const {
        return p[(static_cast<size_t>(js) * n_actions + x) * n_states + js2];
    }
    double reward(int js, int x) const { return r[static_cast<size_t>(js) * n_actions + x]; }
};

FlatMdp flatten(const ThoughtMdp& mdp);

// Samples a flat transition with the same one-draw-per-step discipline as
// step(); used by the trajectory-equivalence harness.
struct FlatStepResult {
    int next = 0;
    double reward = 0.0;
    bool terminated = false;
};
FlatStepResult flat_step(const FlatMdp& flat, int js, int x, Rng& rng);

// JSON (de)serialization. Layout: n_env_states, n_thought_states,
// env_actions, thought_actions, gamma, terminals, and dense row-major
// arrays p, r, p_tau. Loading validates and throws on a failing report.
std::string to_json(const ThoughtMdp& mdp);
ThoughtMdp mdp_from_json(const std::string& text);
void save_mdp(const ThoughtMdp& mdp, const std::string& path);
ThoughtMdp load_mdp(const std::string& path);

std::string to_json(const TabularPolicy& policy);
TabularPolicy policy_from_json(const std::string& text);
void save_policy(const TabularPolicy& policy, const std::string& path);
TabularPolicy load_policy(const std::string& path);

}  // namespace tmdp
