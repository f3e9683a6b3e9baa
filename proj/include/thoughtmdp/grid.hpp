#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "thoughtmdp/core.hpp"

namespace tmdp {

// 5x5 gridworld; (0,0) is the top-left corner, (4,4) the bottom-right.
constexpr int kGridSize = 5;

struct GridPos {
    int row = 0;
    int col = 0;
    bool operator==(const GridPos&) const = default;
};

// Cardinal moves plus the three special actions. The enum order fixes the
// action-logit ordering of the sequence policy.
enum class GridAction : int { Up = 0, Down, Left, Right, A, B, C };
constexpr int kNumGridActions = 7;

bool is_special(GridAction a);
char action_char(GridAction a);          // 'u','d','l','r','A','B','C'
std::string action_name(GridAction a);   // "up", ..., "A", ...
GridAction action_from_name(const std::string& name);

// Tasks name the corner sequence their cue commands: A -> bottom-right,
// B -> top-left, C -> bottom-right then top-left.
struct Task {
    char label = 'A';
    std::vector<GridPos> targets() const;
};

// Moves clamp at the borders; special actions leave the position unchanged.
GridPos grid_step(GridPos pos, GridAction action);

// A move that strictly decreases Manhattan distance to `target`, resolving
// the row gap before the column gap. pos == target is a contract violation.
GridAction optimal_move(GridPos pos, GridPos target);

int manhattan(GridPos a, GridPos b);

struct EpisodeStep {
    GridPos pos;        // position before the action
    GridAction action;
};

struct EpisodeRecord {
    char cue = 'A';
    std::vector<EpisodeStep> steps;
    int reward = 0;   // 1 iff success
    bool success = false;
    int length = 0;

    GridPos start() const { return steps.empty() ? GridPos{} : steps.front().pos; }
};

// Positions visited over the episode, indices 0..length (start through the
// position after the final action), reconstructed through grid_step.
std::vector<GridPos> replay_positions(const EpisodeRecord& episode);

// Task-C success: some visit to (4,4) happens strictly before some visit to
// (0,0) in the replayed position sequence.
bool success_task_c(const EpisodeRecord& episode);

// The play agent behind pre-training data: keeps a current task over {A, B};
// each step it resamples the task uniformly with probability 0.25 (and
// whenever it stands on the current target), emitting the sampled special
// action as that step's action, and otherwise moves optimally toward the
// target. The cue records the initial task.
EpisodeRecord play_rollout(Rng& rng, int length, GridPos start);

// Line-delimited JSON, one EpisodeRecord per line, after a schema header line.
extern const char* kEpisodeSchemaVersion;
void write_episodes_jsonl(const std::vector<EpisodeRecord>& episodes, std::ostream& out);
std::vector<EpisodeRecord> read_episodes_jsonl(std::istream& in);
void save_episodes(const std::vector<EpisodeRecord>& episodes, const std::string& path);
std::vector<EpisodeRecord> load_episodes(const std::string& path);

// The gridworld's single-corner tasks expressed as a tabular thought MDP:
// 25 env states, 4 moves, one thought state, and the three special actions
// as self-looping thought actions. The task's target is terminal and entering
// it pays 1. Used by the validation and flattening harnesses.
ThoughtMdp build_grid_task_mdp(char task_label);

}  // namespace tmdp
