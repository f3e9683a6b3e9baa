#include "thoughtmdp/chain.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "thoughtmdp/svg.hpp"

namespace tmdp {

namespace {
constexpr int kLeft = 0, kRight = 1;  // env actions
constexpr int kUp = 0, kDown = 1;     // thought actions
}  // namespace

ChainBuild build_chain(const ChainSpec& spec) {
    const int n = spec.n_env_states;
    if (n < 2) throw std::invalid_argument("build_chain: need at least 2 env states");
    if (!(spec.discount > 0.0 && spec.discount < 1.0))
        throw std::invalid_argument("build_chain: discount must lie in (0, 1)");

    ThoughtMdp m;
    m.n_env_states = n;
    m.n_thought_states = 2;
    m.env_action_names = {"left", "right"};
    m.thought_action_names = {"up", "down"};
    m.gamma = spec.discount;
    m.terminals = {n - 1};
    m.p.assign(static_cast<size_t>(n) * 2 * n, 0.0);
    m.r.assign(static_cast<size_t>(n) * 2, 0.0);
    m.p_tau.assign(static_cast<size_t>(n) * 2 * 2, 0);

    auto set_move = [&](int s, int a, int s2) {
        m.p[(static_cast<size_t>(s) * 2 + a) * n + s2] = 1.0;
    };
    for (int s = 0; s < n; ++s) {
        if (s == n - 1) {  // terminal: absorbing, zero reward
            set_move(s, kLeft, s);
            set_move(s, kRight, s);
        } else {
            set_move(s, kLeft, std::max(0, s - 1));
            set_move(s, kRight, s + 1);
        }
        // up: τ0 -> τ1, self-loop at τ1; down: mirror image
        m.p_tau[(static_cast<size_t>(s) * 2 + 0) * 2 + kUp] = 1;
        m.p_tau[(static_cast<size_t>(s) * 2 + 1) * 2 + kUp] = 1;
        m.p_tau[(static_cast<size_t>(s) * 2 + 0) * 2 + kDown] = 0;
        m.p_tau[(static_cast<size_t>(s) * 2 + 1) * 2 + kDown] = 0;
    }
    m.r[static_cast<size_t>(n - 2) * 2 + kRight] = 1.0;  // goal entry pays the reward

    TabularPolicy init = TabularPolicy::make_deterministic(m, 0);
    for (int s = 0; s < n; ++s) {
        init.set(m.joint_index(s, 0), kLeft);
        init.set(m.joint_index(s, 1), kRight);
    }
    return {std::move(m), std::move(init)};
}

namespace {

bool row_thinks_at(const ThoughtMdp& m, const TabularPolicy& pi, int s, int tau) {
    return m.action_ref(pi.at(m.joint_index(s, tau))).kind == ActionKind::Thought;
}

void milestone_fail(const ChainReproduction& rep, const std::string& what) {
    std::ostringstream os;
    os << "chain milestone failed: " << what << " (full trace at " << rep.trace_csv_path << ")";
    throw std::runtime_error(os.str());
}

void render_snapshot(const ThoughtMdp& m, const ChainSnapshot& snap, const std::string& path) {
    const int n = m.n_env_states;
    const double cell = 46.0, margin = 40.0;
    SvgWriter svg(margin * 2 + n * cell, margin * 2 + 2 * cell + 20);
    double vmax = 1e-12;
    for (double v : snap.values.v) vmax = std::max(vmax, v);

    for (int tau = 0; tau < 2; ++tau) {
        // τ1 on the top row, matching the lattice orientation
        double y = margin + (1 - tau) * cell;
        for (int s = 0; s < n; ++s) {
            double x = margin + s * cell;
            double v = snap.values.at(s, tau);
            svg.rect(x, y, cell, cell, heat_color(v / vmax), "#333", 1.0);
            if (m.is_terminal(s)) {
                svg.text(x + cell / 2, y + cell / 2 + 4, "G", 14, "middle");
                continue;
            }
            ActionRef a = m.action_ref(snap.policy.at(m.joint_index(s, tau)));
            double dx = 0, dy = 0;
            if (a.kind == ActionKind::Env)
                dx = (a.index == kRight) ? 1 : -1;
            else
                dy = (a.index == kUp) ? -1 : 1;
            svg.arrow(x + cell / 2, y + cell / 2, dx, dy, cell * 0.55, "#ffffff", 2.0);
        }
        svg.text(margin - 8, y + cell / 2 + 4, tau == 1 ? "t1" : "t0", 12, "end");
    }
    svg.text(margin, margin - 12, "iteration " + std::to_string(snap.iteration), 14);
    svg.save(path);
}

}  // namespace

ChainReproduction reproduce_figure(const ChainSpec& spec, const std::vector<int>& snapshot_iters,
                                   const std::string& out_dir) {
    for (size_t i = 1; i < snapshot_iters.size(); ++i)
        if (snapshot_iters[i] < snapshot_iters[i - 1])
            throw std::invalid_argument("reproduce_figure: snapshot iterations must be ascending");

    std::filesystem::create_directories(out_dir);
    ChainBuild build = build_chain(spec);
    const ThoughtMdp& m = build.mdp;
    const int n = spec.n_env_states;

    PolicyIterationOptions opts;
    opts.monitor = true;
    opts.tie_break = TieBreak::PreferIncumbent;
    opts.backend = EvalBackend::ExactLinear;
    opts.max_iters = 4 * n;

    ChainReproduction rep;
    rep.result = policy_iteration(m, build.init_policy, opts);

    rep.trace_csv_path = out_dir + "/trace.csv";
    {
        std::ofstream csv(rep.trace_csv_path);
        write_trace_csv(m, rep.result.trace, csv);
    }

    const auto& snaps = rep.result.trace.snapshots;
    auto snapshot_at = [&](int k) -> ChainSnapshot {
        int idx = std::min<int>(k, static_cast<int>(snaps.size()) - 1);
        return {k, snaps[idx].policy, snaps[idx].values};
    };

    for (int k : snapshot_iters) {
        ChainSnapshot snap = snapshot_at(k);
        std::string path = out_dir + "/snapshot_" + std::to_string(k) + ".svg";
        render_snapshot(m, snap, path);
        rep.snapshots.push_back(std::move(snap));
        rep.snapshot_svg_paths.push_back(path);
    }

    if (!rep.result.converged) milestone_fail(rep, "policy iteration did not converge");

    // Milestone 1: after one improvement the τ0 row thinks everywhere except
    // the state adjacent to the goal, which moves right directly.
    if (n > 2) {
        const TabularPolicy& p1 = snaps[std::min<size_t>(1, snaps.size() - 1)].policy;
        for (int s = 0; s <= n - 3; ++s)
            if (!row_thinks_at(m, p1, s, 0))
                milestone_fail(rep, "iteration 1 should think at (s=" + std::to_string(s) + ", t0)");
        if (row_thinks_at(m, p1, n - 2, 0) ||
            m.action_ref(p1.at(m.joint_index(n - 2, 0))).index != kRight)
            milestone_fail(rep, "iteration 1 should move right at the state next to the goal");
    }

    // Milestone 2: an intermediate snapshot mixes direct right moves near the
    // goal with thinking far from it.
    if (n > 3 && static_cast<int>(snaps.size()) > 3) {
        int mid = static_cast<int>(snaps.size()) / 2;
        const TabularPolicy& pm = snaps[mid].policy;
        bool any_think = false, any_right = false;
        for (int s = 0; s < n - 1; ++s) {
            if (row_thinks_at(m, pm, s, 0)) any_think = true;
            else any_right = true;
        }
        if (!(any_think && any_right))
            milestone_fail(rep, "intermediate iteration should mix thinking and direct moves");
    }

    // Milestone 3: the converged policy moves right everywhere, no thinking.
    for (int tau = 0; tau < 2; ++tau)
        for (int s = 0; s < n - 1; ++s) {
            ActionRef a = m.action_ref(rep.result.policy.at(m.joint_index(s, tau)));
            if (a.kind != ActionKind::Env || a.index != kRight)
                milestone_fail(rep, "converged policy must move right at (s=" + std::to_string(s) +
                                        ", tau=" + std::to_string(tau) + ")");
        }

    return rep;
}

}  // namespace tmdp
