#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "thoughtmdp/chain.hpp"
#include "thoughtmdp/core.hpp"
#include "thoughtmdp/grid.hpp"
#include "thoughtmdp/harness.hpp"
#include "thoughtmdp/horizon.hpp"
#include "thoughtmdp/net.hpp"
#include "thoughtmdp/solver.hpp"

namespace py = pybind11;
using namespace tmdp;

namespace {

GridAction action_from_any(const py::object& a) {
    if (py::isinstance<py::str>(a)) return action_from_name(a.cast<std::string>());
    return a.cast<GridAction>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Tabular thought-MDP solvers and a learned-to-think gridworld pipeline";

    py::enum_<ActionKind>(m, "ActionKind")
        .value("Env", ActionKind::Env)
        .value("Thought", ActionKind::Thought);

    py::class_<ActionRef>(m, "ActionRef")
        .def(py::init([](ActionKind kind, int index) { return ActionRef{kind, index}; }),
             py::arg("kind"), py::arg("index"))
        .def_readonly("kind", &ActionRef::kind)
        .def_readonly("index", &ActionRef::index)
        .def("__repr__", [](const ActionRef& a) {
            return std::string(a.kind == ActionKind::Env ? "Env(" : "Thought(") +
                   std::to_string(a.index) + ")";
        });

    py::class_<JointState>(m, "JointState")
        .def(py::init([](int env, int thought) { return JointState{env, thought}; }),
             py::arg("env"), py::arg("thought"))
        .def_readonly("env", &JointState::env)
        .def_readonly("thought", &JointState::thought);

    py::class_<ThoughtMdp>(m, "ThoughtMdp")
        .def_readonly("n_env_states", &ThoughtMdp::n_env_states)
        .def_readonly("n_thought_states", &ThoughtMdp::n_thought_states)
        .def_readonly("gamma", &ThoughtMdp::gamma)
        .def_readonly("terminals", &ThoughtMdp::terminals)
        .def_property_readonly("n_env_actions", &ThoughtMdp::n_env_actions)
        .def_property_readonly("n_thought_actions", &ThoughtMdp::n_thought_actions)
        .def("reward", &ThoughtMdp::reward)
        .def("trans", &ThoughtMdp::trans)
        .def("thought_next", &ThoughtMdp::thought_next)
        .def("to_json", [](const ThoughtMdp& m2) { return to_json(m2); })
        .def_static("from_json", &mdp_from_json);

    py::class_<TabularPolicy>(m, "TabularPolicy")
        .def_readonly("deterministic", &TabularPolicy::deterministic)
        .def("action_at", &TabularPolicy::at)
        .def("prob", &TabularPolicy::prob)
        .def("to_json", [](const TabularPolicy& p) { return to_json(p); })
        .def_static("from_json", &policy_from_json);

    py::class_<ValidationReport>(m, "ValidationReport")
        .def_readonly("structural_ok", &ValidationReport::structural_ok)
        .def_readonly("assumption1_ok", &ValidationReport::assumption1_ok)
        .def_readonly("assumption2_ok", &ValidationReport::assumption2_ok)
        .def_readonly("assumption3_ok", &ValidationReport::assumption3_ok)
        .def("ok", &ValidationReport::ok)
        .def("summary", &ValidationReport::summary);

    m.def("validate", &validate);
    m.def(
        "step",
        [](const ThoughtMdp& mdp, const JointState& st, const ActionRef& a, uint64_t seed) {
            Rng rng(seed);
            StepResult r = step(mdp, st, a, rng);
            return py::make_tuple(r.next, r.reward, r.terminated);
        },
        py::arg("mdp"), py::arg("state"), py::arg("action"), py::arg("seed"));

    py::class_<ValueTable>(m, "ValueTable")
        .def("at", [](const ValueTable& v, int s, int tau) { return v.at(s, tau); });

    py::enum_<TieBreak>(m, "TieBreak")
        .value("PreferEnv", TieBreak::PreferEnv)
        .value("PreferIncumbent", TieBreak::PreferIncumbent);

    py::class_<PolicyIterationResult>(m, "PolicyIterationResult")
        .def_readonly("policy", &PolicyIterationResult::policy)
        .def_readonly("values", &PolicyIterationResult::values)
        .def_readonly("converged", &PolicyIterationResult::converged)
        .def_readonly("iterations", &PolicyIterationResult::iterations);

    m.def(
        "evaluate_policy",
        [](const ThoughtMdp& mdp, const TabularPolicy& pi, double tol, bool exact) {
            return evaluate_policy(mdp, pi, tol,
                                   exact ? EvalBackend::ExactLinear : EvalBackend::Iterative);
        },
        py::arg("mdp"), py::arg("policy"), py::arg("tolerance") = 1e-10, py::arg("exact") = false);
    m.def("q_values", &q_values);
    m.def(
        "policy_iteration",
        [](const ThoughtMdp& mdp, const TabularPolicy& init, int max_iters, bool monitor,
           TieBreak tie_break) {
            PolicyIterationOptions opts;
            opts.max_iters = max_iters;
            opts.monitor = monitor;
            opts.tie_break = tie_break;
            opts.backend = EvalBackend::ExactLinear;
            return policy_iteration(mdp, init, opts);
        },
        py::arg("mdp"), py::arg("init_policy"), py::arg("max_iters") = 1000,
        py::arg("monitor") = true, py::arg("tie_break") = TieBreak::PreferEnv);
    m.def("verify_no_thought_optimal", [](const ThoughtMdp& mdp, const TabularPolicy& pi) {
        return verify_no_thought_optimal(mdp, pi).pass;
    });

    py::class_<ChainBuild>(m, "ChainBuild")
        .def_readonly("mdp", &ChainBuild::mdp)
        .def_readonly("init_policy", &ChainBuild::init_policy);
    m.def(
        "build_chain",
        [](int n_env_states, double discount) {
            return build_chain({n_env_states, discount});
        },
        py::arg("n_env_states") = 10, py::arg("discount") = 0.9);

    m.def(
        "horizon_bound",
        [](int n_actions, int horizon_T, double p) -> py::object {
            std::optional<double> b = horizon_bound(n_actions, horizon_T, p);
            if (!b) return py::none();
            return py::float_(*b);
        },
        py::arg("n_actions"), py::arg("horizon_T"), py::arg("p"));
    m.def(
        "proposition2_compare",
        [](double p0, double p1, double pc) {
            Prop2Record r = proposition2_compare(p0, p1, pc);
            py::dict d;
            d["effective_lower"] = r.effective_lower;
            d["reduced"] = r.reduced;
            d["bound_without"] = r.bound_without ? py::object(py::float_(*r.bound_without))
                                                 : py::object(py::none());
            d["bound_with"] =
                r.bound_with ? py::object(py::float_(*r.bound_with)) : py::object(py::none());
            return d;
        },
        py::arg("p0"), py::arg("p1"), py::arg("pc"));

    py::enum_<GridAction>(m, "GridAction")
        .value("Up", GridAction::Up)
        .value("Down", GridAction::Down)
        .value("Left", GridAction::Left)
        .value("Right", GridAction::Right)
        .value("A", GridAction::A)
        .value("B", GridAction::B)
        .value("C", GridAction::C);

    py::class_<GridPos>(m, "GridPos")
        .def(py::init([](int row, int col) { return GridPos{row, col}; }), py::arg("row"),
             py::arg("col"))
        .def_readonly("row", &GridPos::row)
        .def_readonly("col", &GridPos::col)
        .def("__eq__", [](const GridPos& a, const GridPos& b) { return a == b; })
        .def("__repr__", [](const GridPos& p) {
            return "(" + std::to_string(p.row) + "," + std::to_string(p.col) + ")";
        });

    py::class_<EpisodeStep>(m, "EpisodeStep")
        .def_readonly("pos", &EpisodeStep::pos)
        .def_readonly("action", &EpisodeStep::action);

    py::class_<EpisodeRecord>(m, "EpisodeRecord")
        .def_readonly("cue", &EpisodeRecord::cue)
        .def_readonly("steps", &EpisodeRecord::steps)
        .def_readonly("reward", &EpisodeRecord::reward)
        .def_readonly("success", &EpisodeRecord::success)
        .def_readonly("length", &EpisodeRecord::length);

    m.def(
        "grid_step",
        [](const GridPos& pos, const py::object& action) {
            return grid_step(pos, action_from_any(action));
        },
        py::arg("pos"), py::arg("action"));
    m.def(
        "optimal_move",
        [](const GridPos& pos, const GridPos& target) {
            return action_name(optimal_move(pos, target));
        },
        py::arg("pos"), py::arg("target"));
    m.def(
        "play_rollout",
        [](uint64_t seed, int length, const GridPos& start) {
            Rng rng(seed);
            return play_rollout(rng, length, start);
        },
        py::arg("seed"), py::arg("length") = 40, py::arg("start") = GridPos{2, 2});
    m.def("success_task_c", &success_task_c);
    m.def("replay_positions", &replay_positions);

    py::class_<PolicyNetConfig>(m, "PolicyNetConfig")
        .def(py::init<>())
        .def_readwrite("width", &PolicyNetConfig::width)
        .def_readwrite("blocks", &PolicyNetConfig::blocks)
        .def_readwrite("heads", &PolicyNetConfig::heads)
        .def_readwrite("ffn", &PolicyNetConfig::ffn)
        .def_readwrite("max_seq", &PolicyNetConfig::max_seq);

    py::class_<PolicyNet>(m, "PolicyNet")
        .def_static("init", &PolicyNet::init, py::arg("config") = PolicyNetConfig{},
                    py::arg("seed") = 0)
        .def_property_readonly("n_params", &PolicyNet::n_params)
        .def("forward_last", &PolicyNet::forward_last)
        .def("save",
             [](const PolicyNet& net, const std::string& path) { save_model(net, nullptr, path); })
        .def_static("load", [](const std::string& path) { return load_model(path).net; });

    m.def(
        "encode_history",
        [](char cue, const std::vector<EpisodeStep>& steps, const GridPos& current) {
            return encode_history(cue, steps, current);
        },
        py::arg("cue"), py::arg("steps"), py::arg("current"));
    m.def("mask_thought", [](std::vector<float> logits) {
        mask_thought(logits.data(), static_cast<int>(logits.size()));
        return logits;
    });

    py::class_<RolloutBatchSpec>(m, "RolloutBatchSpec")
        .def(py::init<>())
        .def_readwrite("cue", &RolloutBatchSpec::cue)
        .def_readwrite("start", &RolloutBatchSpec::start)
        .def_readwrite("cap", &RolloutBatchSpec::cap)
        .def_readwrite("episode_seeds", &RolloutBatchSpec::episode_seeds);
    m.def("sample_episodes", &sample_episodes, py::arg("net"), py::arg("spec"));

    m.attr("__version__") = "0.1.0";
}
