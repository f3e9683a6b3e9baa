#include "thoughtmdp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace tmdp {

namespace {

ValueTable zero_values(const ThoughtMdp& mdp) {
    ValueTable vt;
    vt.n_env_states = mdp.n_env_states;
    vt.n_thought_states = mdp.n_thought_states;
    vt.v.assign(mdp.n_joint_states(), 0.0);
    return vt;
}

// Expected backup for one joint state under the policy's action mixture.
double backup(const ThoughtMdp& m, const TabularPolicy& pi, const std::vector<double>& v, int js) {
    const int T = m.n_thought_states, A = m.n_env_actions(), C = m.n_thought_actions();
    const int s = js / T, tau = js % T;
    double total = 0.0;
    for (int x = 0; x < A + C; ++x) {
        double px = pi.prob(js, x);
        if (px == 0.0) continue;
        double q;
        if (x < A) {
            double ev = 0.0;
            for (int s2 = 0; s2 < m.n_env_states; ++s2) {
                double t = m.trans(s, x, s2);
                if (t > 0.0) ev += t * v[static_cast<size_t>(s2) * T + tau];
            }
            q = m.reward(s, x) + m.gamma * ev;
        } else {
            int tau2 = m.thought_next(s, tau, x - A);
            q = m.gamma * v[static_cast<size_t>(s) * T + tau2];
        }
        total += px * q;
    }
    return total;
}

ValueTable evaluate_iterative(const ThoughtMdp& m, const TabularPolicy& pi, double tol,
                              long max_sweeps) {
    ValueTable vt = zero_values(m);
    const int JS = m.n_joint_states(), T = m.n_thought_states;
    std::vector<double> next(JS, 0.0);
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        double delta = 0.0;
        for (int js = 0; js < JS; ++js) {
            if (m.is_terminal(js / T)) {
                next[js] = 0.0;
                continue;
            }
            next[js] = backup(m, pi, vt.v, js);
            delta = std::max(delta, std::abs(next[js] - vt.v[js]));
        }
        vt.v.swap(next);
        if (delta < tol) return vt;
    }
    throw std::runtime_error("evaluate_policy: no convergence within max sweeps");
}

ValueTable evaluate_exact(const ThoughtMdp& m, const TabularPolicy& pi) {
    // Solve (I - γ P_π) v = r_π over non-terminal joint states; terminal
    // values are pinned to zero.
    const int JS = m.n_joint_states(), T = m.n_thought_states;
    const int A = m.n_env_actions(), C = m.n_thought_actions();

    std::vector<int> sysidx(JS, -1);
    std::vector<int> states;
    for (int js = 0; js < JS; ++js)
        if (!m.is_terminal(js / T)) {
            sysidx[js] = static_cast<int>(states.size());
            states.push_back(js);
        }
    const int N = static_cast<int>(states.size());
    ValueTable vt = zero_values(m);
    if (N == 0) return vt;

    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(N);
    std::vector<double> row(JS);

    for (int i = 0; i < N; ++i) {
        int js = states[i];
        int s = js / T, tau = js % T;
        std::fill(row.begin(), row.end(), 0.0);
        double rpi = 0.0;
        for (int x = 0; x < A + C; ++x) {
            double px = pi.prob(js, x);
            if (px == 0.0) continue;
            if (x < A) {
                rpi += px * m.reward(s, x);
                for (int s2 = 0; s2 < m.n_env_states; ++s2) {
                    double t = m.trans(s, x, s2);
                    if (t > 0.0) row[m.joint_index(s2, tau)] += px * t;
                }
            } else {
                row[m.joint_index(s, m.thought_next(s, tau, x - A))] += px;
            }
        }
        b[i] = rpi;
        trips.emplace_back(i, i, 1.0);
        for (int js2 = 0; js2 < JS; ++js2) {
            if (row[js2] == 0.0 || sysidx[js2] < 0) continue;  // terminal successors contribute 0
            trips.emplace_back(i, sysidx[js2], -m.gamma * row[js2]);
        }
    }

    Eigen::SparseMatrix<double> Amat(N, N);
    Amat.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(Amat);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("evaluate_policy: sparse LU factorization failed");
    Eigen::VectorXd x = solver.solve(b);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("evaluate_policy: sparse solve failed");
    for (int i = 0; i < N; ++i) vt.v[states[i]] = x[i];
    return vt;
}

}  // namespace

ValueTable evaluate_policy(const ThoughtMdp& mdp, const TabularPolicy& policy, double tolerance,
                           EvalBackend backend, long max_sweeps) {
    std::string why;
    if (!policy_valid_for(policy, mdp, &why))
        throw std::invalid_argument("evaluate_policy: " + why);
    if (!(tolerance > 0.0)) throw std::invalid_argument("evaluate_policy: tolerance must be > 0");
    return backend == EvalBackend::Iterative ? evaluate_iterative(mdp, policy, tolerance, max_sweeps)
                                             : evaluate_exact(mdp, policy);
}

std::vector<double> q_values(const ThoughtMdp& m, const ValueTable& values, int s, int tau) {
    const int A = m.n_env_actions(), C = m.n_thought_actions(), T = m.n_thought_states;
    std::vector<double> q(A + C, 0.0);
    if (m.is_terminal(s)) return q;  // absorbing zero-reward terminal
    for (int a = 0; a < A; ++a) {
        double ev = 0.0;
        for (int s2 = 0; s2 < m.n_env_states; ++s2) {
            double t = m.trans(s, a, s2);
            if (t > 0.0) ev += t * values.v[static_cast<size_t>(s2) * T + tau];
        }
        q[a] = m.reward(s, a) + m.gamma * ev;
    }
    for (int c = 0; c < C; ++c)
        q[A + c] = m.gamma * values.v[static_cast<size_t>(s) * T + m.thought_next(s, tau, c)];
    return q;
}

TabularPolicy improve(const ThoughtMdp& mdp, const ValueTable& values, TieBreak tie_break,
                      const TabularPolicy* incumbent, double tie_tol) {
    if (tie_break == TieBreak::PreferIncumbent && (!incumbent || !incumbent->deterministic))
        throw std::invalid_argument("improve: PreferIncumbent needs a deterministic incumbent");

    TabularPolicy out = TabularPolicy::make_deterministic(mdp, 0);
    const int JS = mdp.n_joint_states(), T = mdp.n_thought_states;
    for (int js = 0; js < JS; ++js) {
        int s = js / T, tau = js % T;
        if (mdp.is_terminal(s)) {
            // terminal cells never act; carry the incumbent so policy
            // equality is meaningful
            if (incumbent && incumbent->deterministic) out.set(js, incumbent->at(js));
            continue;
        }
        std::vector<double> q = q_values(mdp, values, s, tau);
        // Scan in joint-action order (env first, then thought, by index) and
        // replace the champion only on a strict win: exact ties land on the
        // earliest action in that order.
        int best = 0;
        for (int x = 1; x < static_cast<int>(q.size()); ++x)
            if (q[x] > q[best] + tie_tol) best = x;
        if (tie_break == TieBreak::PreferIncumbent) {
            int cur = incumbent->at(js);
            if (q[best] <= q[cur] + tie_tol) best = cur;
        }
        out.set(js, best);
    }
    return out;
}

namespace {

std::string cell_str(const ThoughtMdp& m, int s, int tau, ActionRef a) {
    std::ostringstream os;
    os << "(s=" << s << ", tau=" << tau << ") -> "
       << (a.kind == ActionKind::Env ? m.env_action_names[a.index]
                                     : m.thought_action_names[a.index]);
    return os.str();
}

// Theorem-1 and Corollary-1 assertions against the pre-improvement values.
void run_monitors(const ThoughtMdp& m, const ValueTable& pre_values,
                  const std::vector<ImprovementEvent>& events) {
    for (const auto& e : events) {
        if (e.old_action.kind != ActionKind::Env || e.new_action.kind != ActionKind::Thought)
            continue;
        int tau2 = m.thought_next(e.s, e.tau, e.new_action.index);
        if (!(pre_values.at(e.s, tau2) > pre_values.at(e.s, e.tau))) {
            std::ostringstream os;
            os << "improvement monitor: switching " << cell_str(m, e.s, e.tau, e.new_action)
               << " requires v(s, tau') > v(s, tau) but " << pre_values.at(e.s, tau2)
               << " <= " << pre_values.at(e.s, e.tau);
            throw MonitorViolation(os.str());
        }
    }
    // chained switches in the same iteration: tau -> tau' and tau' -> tau''
    for (const auto& e1 : events) {
        if (e1.old_action.kind != ActionKind::Env || e1.new_action.kind != ActionKind::Thought)
            continue;
        int tau_p = m.thought_next(e1.s, e1.tau, e1.new_action.index);
        for (const auto& e2 : events) {
            if (e2.s != e1.s || e2.tau != tau_p) continue;
            if (e2.old_action.kind != ActionKind::Env || e2.new_action.kind != ActionKind::Thought)
                continue;
            int tau_pp = m.thought_next(e2.s, e2.tau, e2.new_action.index);
            double v0 = pre_values.at(e1.s, e1.tau);
            double v1 = pre_values.at(e1.s, tau_p);
            double v2 = pre_values.at(e1.s, tau_pp);
            if (!(v2 > v1 && v1 > v0)) {
                std::ostringstream os;
                os << "chained-improvement monitor at s=" << e1.s << ": expected v(tau'')="
                   << v2 << " > v(tau')=" << v1 << " > v(tau)=" << v0;
                throw MonitorViolation(os.str());
            }
        }
    }
}

}  // namespace

PolicyIterationResult policy_iteration(const ThoughtMdp& mdp, const TabularPolicy& init_policy,
                                       const PolicyIterationOptions& opts) {
    std::string why;
    if (!policy_valid_for(init_policy, mdp, &why))
        throw std::invalid_argument("policy_iteration: " + why);

    PolicyIterationResult res;
    TabularPolicy current = init_policy;
    ValueTable values = evaluate_policy(mdp, current, opts.tolerance, opts.backend);
    if (opts.keep_trace) res.trace.snapshots.push_back({current, values, {}});

    // PreferIncumbent needs a deterministic incumbent; a stochastic initial
    // policy is compared against its own greedy successor from iteration 2 on.
    for (int iter = 1; iter <= opts.max_iters; ++iter) {
        const TabularPolicy* inc = current.deterministic ? &current : nullptr;
        TieBreak tb = opts.tie_break;
        if (tb == TieBreak::PreferIncumbent && !inc) tb = TieBreak::PreferEnv;
        TabularPolicy next = improve(mdp, values, tb, inc, opts.tie_tol);

        std::vector<ImprovementEvent> events;
        for (int js = 0; js < mdp.n_joint_states(); ++js) {
            if (mdp.is_terminal(js / mdp.n_thought_states)) continue;
            bool changed;
            ActionRef old_a{};
            if (current.deterministic) {
                changed = current.at(js) != next.at(js);
                old_a = mdp.action_ref(current.at(js));
            } else {
                changed = current.prob(js, next.at(js)) != 1.0;
                // report the old action as the mixture's argmax
                int arg = 0;
                for (int x = 1; x < mdp.n_joint_actions(); ++x)
                    if (current.prob(js, x) > current.prob(js, arg)) arg = x;
                old_a = mdp.action_ref(arg);
            }
            if (!changed) continue;
            JointState st = mdp.joint_state(js);
            events.push_back({st.env, st.thought, old_a, mdp.action_ref(next.at(js)),
                              q_values(mdp, values, st.env, st.thought)});
        }

        if (opts.monitor) run_monitors(mdp, values, events);

        res.iterations = iter;
        bool converged = events.empty() && current.deterministic;
        current = next;
        values = evaluate_policy(mdp, current, opts.tolerance, opts.backend);
        if (opts.keep_trace) res.trace.snapshots.push_back({current, values, events});
        if (converged) {
            res.converged = true;
            break;
        }
    }
    res.policy = current;
    res.values = values;
    return res;
}

ThoughtOptimalityReport verify_no_thought_optimal(const ThoughtMdp& mdp,
                                                  const TabularPolicy& policy) {
    ThoughtOptimalityReport rep;
    for (int js = 0; js < mdp.n_joint_states(); ++js) {
        JointState st = mdp.joint_state(js);
        if (mdp.is_terminal(st.env)) continue;
        bool thinks;
        if (policy.deterministic) {
            thinks = mdp.action_ref(policy.at(js)).kind == ActionKind::Thought;
        } else {
            thinks = false;
            for (int x = mdp.n_env_actions(); x < mdp.n_joint_actions(); ++x)
                if (policy.prob(js, x) > 0.0) thinks = true;
        }
        if (thinks) {
            rep.pass = false;
            rep.violations.push_back(st);
        }
    }
    return rep;
}

void write_trace_csv(const ThoughtMdp& mdp, const IterationTrace& trace, std::ostream& out) {
    out << "# iteration counts completed improvement steps; iteration 0 is the initial policy\n";
    out << "iteration,s,tau,action_kind,action_index,value\n";
    for (size_t k = 0; k < trace.snapshots.size(); ++k) {
        const auto& snap = trace.snapshots[k];
        for (int js = 0; js < mdp.n_joint_states(); ++js) {
            JointState st = mdp.joint_state(js);
            int x;
            if (snap.policy.deterministic) {
                x = snap.policy.at(js);
            } else {
                x = 0;
                for (int y = 1; y < mdp.n_joint_actions(); ++y)
                    if (snap.policy.prob(js, y) > snap.policy.prob(js, x)) x = y;
            }
            ActionRef a = mdp.action_ref(x);
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.12g", snap.values.at_joint(js));
            out << k << ',' << st.env << ',' << st.thought << ','
                << (a.kind == ActionKind::Env ? "env" : "thought") << ',' << a.index << ','
                << buf << '\n';
        }
    }
}

}  // namespace tmdp
