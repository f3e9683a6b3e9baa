#pragma once

#include <string>
#include <vector>

#include "thoughtmdp/core.hpp"
#include "thoughtmdp/solver.hpp"

namespace tmdp {

// Two-row chain lattice: env states 0..n-1 with the goal on the far right,
// left/right env actions, and up/down thought actions toggling between the
// two thought rows. γ applies to thinking and non-thinking steps alike.
struct ChainSpec {
    int n_env_states = 10;
    double discount = 0.9;
};

struct ChainBuild {
    ThoughtMdp mdp;
    TabularPolicy init_policy;  // π(·, τ0) = left everywhere, π(·, τ1) = right everywhere
};

// Reward 1 exactly on the transition entering the goal (r(n-2, right) = 1),
// all other entries 0; the goal state n-1 is terminal. Borders self-loop:
// left at state 0, down at τ0, up at τ1.
ChainBuild build_chain(const ChainSpec& spec);

struct ChainSnapshot {
    int iteration = 0;
    TabularPolicy policy;
    ValueTable values;
};

struct ChainReproduction {
    PolicyIterationResult result;
    std::vector<ChainSnapshot> snapshots;
    std::string trace_csv_path;
    std::vector<std::string> snapshot_svg_paths;
};

// Runs monitored policy iteration from the canonical initialization with
// incumbent-keeping tie resolution (exact act-then-think value ties would
// otherwise erase the iteration-by-iteration frontier), writes trace.csv and
// snapshot_<k>.svg into out_dir, and asserts the qualitative milestones:
// iteration 1 thinks everywhere except next to the goal, an intermediate
// snapshot mixes direct moves near the goal with thinking far from it, and
// the converged policy contains no thought actions at all.
ChainReproduction reproduce_figure(const ChainSpec& spec, const std::vector<int>& snapshot_iters,
                                   const std::string& out_dir);

}  // namespace tmdp
