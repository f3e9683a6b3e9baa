#include "thoughtmdp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tmdp {

const char* kEpisodeSchemaVersion = "tmdp-episodes-v1";

bool is_special(GridAction a) { return a >= GridAction::A; }

char action_char(GridAction a) {
    static constexpr char chars[] = {'u', 'd', 'l', 'r', 'A', 'B', 'C'};
    return chars[static_cast<int>(a)];
}

std::string action_name(GridAction a) {
    static const char* names[] = {"up", "down", "left", "right", "A", "B", "C"};
    return names[static_cast<int>(a)];
}

GridAction action_from_name(const std::string& name) {
    for (int i = 0; i < kNumGridActions; ++i)
        if (action_name(static_cast<GridAction>(i)) == name) return static_cast<GridAction>(i);
    throw std::invalid_argument("unknown grid action: " + name);
}

std::vector<GridPos> Task::targets() const {
    switch (label) {
        case 'A': return {{4, 4}};
        case 'B': return {{0, 0}};
        case 'C': return {{4, 4}, {0, 0}};
    }
    throw std::invalid_argument(std::string("unknown task label: ") + label);
}

namespace {
int clamp_coord(int v) { return std::clamp(v, 0, kGridSize - 1); }
GridPos target_of(char task) { return task == 'A' ? GridPos{4, 4} : GridPos{0, 0}; }
}  // namespace

GridPos grid_step(GridPos pos, GridAction action) {
    switch (action) {
        case GridAction::Up: return {clamp_coord(pos.row - 1), pos.col};
        case GridAction::Down: return {clamp_coord(pos.row + 1), pos.col};
        case GridAction::Left: return {pos.row, clamp_coord(pos.col - 1)};
        case GridAction::Right: return {pos.row, clamp_coord(pos.col + 1)};
        default: return pos;  // special actions have no effect on the grid
    }
}

GridAction optimal_move(GridPos pos, GridPos target) {
    if (pos == target) throw std::logic_error("optimal_move: already at target");
    if (pos.row != target.row) return target.row > pos.row ? GridAction::Down : GridAction::Up;
    return target.col > pos.col ? GridAction::Right : GridAction::Left;
}

int manhattan(GridPos a, GridPos b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

std::vector<GridPos> replay_positions(const EpisodeRecord& episode) {
    std::vector<GridPos> positions;
    if (episode.steps.empty()) return positions;
    positions.reserve(episode.steps.size() + 1);
    GridPos pos = episode.steps.front().pos;
    positions.push_back(pos);
    for (const auto& st : episode.steps) {
        pos = grid_step(pos, st.action);
        positions.push_back(pos);
    }
    return positions;
}

bool success_task_c(const EpisodeRecord& episode) {
    bool seen_br = false;
    for (const GridPos& p : replay_positions(episode)) {
        if (p == GridPos{4, 4}) seen_br = true;
        else if (seen_br && p == GridPos{0, 0}) return true;
    }
    return false;
}

EpisodeRecord play_rollout(Rng& rng, int length, GridPos start) {
    if (length < 1) throw std::invalid_argument("play_rollout: length must be >= 1");
    EpisodeRecord ep;
    char task = uniform01(rng) < 0.5 ? 'A' : 'B';
    ep.cue = task;
    GridPos pos = start;
    ep.steps.reserve(length);
    for (int t = 0; t < length; ++t) {
        bool resample = pos == target_of(task) || uniform01(rng) < 0.25;
        GridAction act;
        if (resample) {
            task = uniform01(rng) < 0.5 ? 'A' : 'B';
            act = task == 'A' ? GridAction::A : GridAction::B;
        } else {
            act = optimal_move(pos, target_of(task));
        }
        ep.steps.push_back({pos, act});
        pos = grid_step(pos, act);
    }
    ep.length = length;
    ep.success = success_task_c(ep);
    ep.reward = ep.success ? 1 : 0;
    return ep;
}

using nlohmann::json;

namespace {
json episode_to_json(const EpisodeRecord& ep) {
    json j;
    j["cue"] = std::string(1, ep.cue);
    json steps = json::array();
    for (const auto& st : ep.steps)
        steps.push_back({{"r", st.pos.row}, {"c", st.pos.col}, {"a", action_name(st.action)}});
    j["steps"] = std::move(steps);
    j["reward"] = ep.reward;
    j["success"] = ep.success;
    j["length"] = ep.length;
    return j;
}

EpisodeRecord episode_from_json(const json& j) {
    EpisodeRecord ep;
    ep.cue = j.at("cue").get<std::string>().at(0);
    for (const auto& st : j.at("steps"))
        ep.steps.push_back({{st.at("r").get<int>(), st.at("c").get<int>()},
                            action_from_name(st.at("a").get<std::string>())});
    ep.reward = j.at("reward").get<int>();
    ep.success = j.at("success").get<bool>();
    ep.length = j.at("length").get<int>();
    return ep;
}
}  // namespace

void write_episodes_jsonl(const std::vector<EpisodeRecord>& episodes, std::ostream& out) {
    out << json{{"schema", kEpisodeSchemaVersion}, {"count", episodes.size()}}.dump() << '\n';
    for (const auto& ep : episodes) out << episode_to_json(ep).dump() << '\n';
}

std::vector<EpisodeRecord> read_episodes_jsonl(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("episode file is empty");
    json header = json::parse(line);
    if (header.at("schema").get<std::string>() != kEpisodeSchemaVersion)
        throw std::runtime_error("unsupported episode schema: " + header.at("schema").dump());
    std::vector<EpisodeRecord> eps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        eps.push_back(episode_from_json(json::parse(line)));
    }
    return eps;
}

void save_episodes(const std::vector<EpisodeRecord>& episodes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_episodes_jsonl(episodes, out);
}

std::vector<EpisodeRecord> load_episodes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_episodes_jsonl(in);
}

ThoughtMdp build_grid_task_mdp(char task_label) {
    if (task_label != 'A' && task_label != 'B')
        throw std::invalid_argument("build_grid_task_mdp: only single-corner tasks A and B");
    GridPos goal = task_label == 'A' ? GridPos{4, 4} : GridPos{0, 0};
    const int S = kGridSize * kGridSize;
    auto idx = [](GridPos p) { return p.row * kGridSize + p.col; };

    ThoughtMdp m;
    m.n_env_states = S;
    m.n_thought_states = 1;
    m.env_action_names = {"up", "down", "left", "right"};
    m.thought_action_names = {"A", "B", "C"};
    m.gamma = 0.95;
    m.terminals = {idx(goal)};
    m.p.assign(static_cast<size_t>(S) * 4 * S, 0.0);
    m.r.assign(static_cast<size_t>(S) * 4, 0.0);
    m.p_tau.assign(static_cast<size_t>(S) * 1 * 3, 0);  // specials self-loop on the lone thought state

    for (int rrow = 0; rrow < kGridSize; ++rrow) {
        for (int col = 0; col < kGridSize; ++col) {
            GridPos pos{rrow, col};
            int s = idx(pos);
            for (int a = 0; a < 4; ++a) {
                GridPos nxt = pos == goal ? pos : grid_step(pos, static_cast<GridAction>(a));
                m.p[(static_cast<size_t>(s) * 4 + a) * S + idx(nxt)] = 1.0;
                if (!(pos == goal) && nxt == goal) m.r[static_cast<size_t>(s) * 4 + a] = 1.0;
            }
        }
    }
    return m;
}

}  // namespace tmdp
