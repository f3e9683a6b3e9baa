#include "thoughtmdp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "thoughtmdp/horizon.hpp"
#include "thoughtmdp/sampler.hpp"
#include "thoughtmdp/svg.hpp"

namespace tmdp {

using nlohmann::json;

std::string condition_name(Condition c) {
    switch (c) {
        case Condition::PretrainedThink: return "Pretrained-Think";
        case Condition::PretrainedNoThink: return "Pretrained-NoThink";
        case Condition::ScratchThink: return "Scratch-Think";
        case Condition::ScratchNoThink: return "Scratch-NoThink";
    }
    throw std::logic_error("bad condition");
}

Condition condition_from_name(const std::string& name) {
    for (Condition c : {Condition::PretrainedThink, Condition::PretrainedNoThink,
                        Condition::ScratchThink, Condition::ScratchNoThink})
        if (condition_name(c) == name) return c;
    throw std::invalid_argument("unknown condition: " + name);
}

std::string default_out_dir() {
    if (const char* env = std::getenv("THOUGHTMDP_OUT"); env && *env) return env;
    return "out";
}

// ---------------------------------------------------------------------------
// config JSON

namespace {
json net_cfg_json(const PolicyNetConfig& c) {
    return {{"vocab", c.vocab},   {"n_actions", c.n_actions}, {"width", c.width},
            {"blocks", c.blocks}, {"heads", c.heads},         {"ffn", c.ffn},
            {"max_seq", c.max_seq}};
}
PolicyNetConfig net_cfg_from_json(const json& j, PolicyNetConfig c) {
    if (j.contains("vocab")) c.vocab = j["vocab"].get<int>();
    if (j.contains("n_actions")) c.n_actions = j["n_actions"].get<int>();
    if (j.contains("width")) c.width = j["width"].get<int>();
    if (j.contains("blocks")) c.blocks = j["blocks"].get<int>();
    if (j.contains("heads")) c.heads = j["heads"].get<int>();
    if (j.contains("ffn")) c.ffn = j["ffn"].get<int>();
    if (j.contains("max_seq")) c.max_seq = j["max_seq"].get<int>();
    return c;
}
}  // namespace

std::string to_json(const ExperimentConfig& cfg) {
    json j;
    j["condition"] = condition_name(cfg.condition);
    j["iterations"] = cfg.iterations;
    j["episodes_per_iteration"] = cfg.episodes_per_iteration;
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    j["rl_lr"] = cfg.rl_lr;
    j["grid"] = {{"episode_cap", cfg.grid.episode_cap},
                 {"start_row", cfg.grid.start.row},
                 {"start_col", cfg.grid.start.col}};
    j["net"] = net_cfg_json(cfg.net);
    j["pretrain"] = {{"n_play_episodes", cfg.pretrain.n_play_episodes},
                     {"play_episode_length", cfg.pretrain.play_episode_length},
                     {"epochs", cfg.pretrain.epochs},
                     {"batch_size", cfg.pretrain.batch_size},
                     {"lr", cfg.pretrain.lr},
                     {"holdout_fraction", cfg.pretrain.holdout_fraction}};
    j["model_path"] = cfg.model_path;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig cfg;
    if (j.contains("condition")) cfg.condition = condition_from_name(j["condition"]);
    if (j.contains("iterations")) cfg.iterations = j["iterations"].get<int>();
    if (j.contains("episodes_per_iteration"))
        cfg.episodes_per_iteration = j["episodes_per_iteration"].get<int>();
    if (j.contains("trials")) cfg.trials = j["trials"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("rl_lr")) cfg.rl_lr = j["rl_lr"].get<double>();
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (g.contains("episode_cap")) cfg.grid.episode_cap = g["episode_cap"].get<int>();
        if (g.contains("start_row")) cfg.grid.start.row = g["start_row"].get<int>();
        if (g.contains("start_col")) cfg.grid.start.col = g["start_col"].get<int>();
    }
    if (j.contains("net")) cfg.net = net_cfg_from_json(j["net"], cfg.net);
    if (j.contains("pretrain")) {
        const auto& p = j["pretrain"];
        if (p.contains("n_play_episodes")) cfg.pretrain.n_play_episodes = p["n_play_episodes"].get<int>();
        if (p.contains("play_episode_length"))
            cfg.pretrain.play_episode_length = p["play_episode_length"].get<int>();
        if (p.contains("epochs")) cfg.pretrain.epochs = p["epochs"].get<int>();
        if (p.contains("batch_size")) cfg.pretrain.batch_size = p["batch_size"].get<int>();
        if (p.contains("lr")) cfg.pretrain.lr = p["lr"].get<double>();
        if (p.contains("holdout_fraction"))
            cfg.pretrain.holdout_fraction = p["holdout_fraction"].get<double>();
    }
    if (j.contains("model_path")) cfg.model_path = j["model_path"].get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    return cfg;
}

// ---------------------------------------------------------------------------
// lockstep rollouts

namespace {

struct EpisodeState {
    GridPos pos;
    bool seen_br = false;
    bool forced_b_done = false;
    bool success = false;
    bool done = false;
    Rng rng;
    EpisodeRecord record;
};

int sample_action(const float* logits, int n, Rng& rng) {
    // softmax draw with double accumulation
    double mx = logits[0];
    for (int k = 1; k < n; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
    double denom = 0.0;
    double probs[16];
    for (int k = 0; k < n; ++k) {
        probs[k] = std::exp(static_cast<double>(logits[k]) - mx);
        denom += probs[k];
    }
    double u = uniform01(rng) * denom;
    double cum = 0.0;
    for (int k = 0; k < n; ++k) {
        cum += probs[k];
        if (u < cum) return k;
    }
    return n - 1;
}

bool step_is_masked(MaskMode mode, int t) {
    switch (mode) {
        case MaskMode::None: return false;
        case MaskMode::All: return true;
        case MaskMode::AlternateOdd: return t % 2 == 1;
    }
    return false;
}

}  // namespace

std::vector<EpisodeRecord> sample_episodes(const PolicyNet& net, const RolloutBatchSpec& spec) {
    const int n = static_cast<int>(spec.episode_seeds.size());
    std::vector<EpisodeState> eps(n);
    for (int i = 0; i < n; ++i) {
        eps[i].pos = spec.start;
        eps[i].rng = Rng(spec.episode_seeds[i]);
        eps[i].record.cue = spec.cue;
        eps[i].seen_br = spec.start == GridPos{4, 4};
    }

    BatchSampler sampler(net, n);
    std::vector<int> slots(n), tokens(n);
    std::iota(slots.begin(), slots.end(), 0);

    auto feed_all = [&](const std::vector<int>& active, auto token_of) {
        tokens.resize(active.size());
        for (size_t i = 0; i < active.size(); ++i) tokens[i] = token_of(active[i]);
        sampler.feed(active, tokens);
    };

    std::vector<int> active = slots;
    feed_all(active, [&](int) { return TokenVocab::kBegin; });
    feed_all(active, [&](int) { return TokenVocab::cue_token(spec.cue); });
    feed_all(active, [&](int i) { return TokenVocab::pos_token(eps[i].pos); });

    for (int t = 0; t < spec.cap && !active.empty(); ++t) {
        for (int i : active) {
            EpisodeState& e = eps[i];
            GridAction act;
            if (spec.force == ForceMode::PromptAThenB && t == 0) {
                act = GridAction::A;
            } else if (spec.force == ForceMode::PromptAThenB && e.seen_br && !e.forced_b_done) {
                act = GridAction::B;
                e.forced_b_done = true;
            } else {
                float logits[16];
                std::copy(sampler.logits(i), sampler.logits(i) + net.cfg.n_actions, logits);
                if (step_is_masked(spec.mask, t)) mask_thought(logits, net.cfg.n_actions);
                act = static_cast<GridAction>(sample_action(logits, net.cfg.n_actions, e.rng));
            }
            e.record.steps.push_back({e.pos, act});
            e.pos = grid_step(e.pos, act);
            if (e.pos == GridPos{4, 4}) e.seen_br = true;
            if (e.seen_br && e.pos == GridPos{0, 0}) e.success = true;
            if ((e.success && spec.terminate_on_success) || t + 1 >= spec.cap) e.done = true;
        }
        std::vector<int> next_active;
        for (int i : active)
            if (!eps[i].done) next_active.push_back(i);
        if (!next_active.empty()) {
            feed_all(next_active,
                     [&](int i) { return TokenVocab::action_token(eps[i].record.steps.back().action); });
            feed_all(next_active, [&](int i) { return TokenVocab::pos_token(eps[i].pos); });
        }
        active.swap(next_active);
    }

    std::vector<EpisodeRecord> out;
    out.reserve(n);
    for (auto& e : eps) {
        e.record.length = static_cast<int>(e.record.steps.size());
        e.record.success = e.success;
        e.record.reward = e.success ? 1 : 0;
        out.push_back(std::move(e.record));
    }
    return out;
}

// ---------------------------------------------------------------------------
// pretraining

namespace {

uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(ss.str())));
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

PretrainResult pretrain(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const PretrainConfig& pc = cfg.pretrain;
    PretrainResult res;

    // play data, uniformly random start cells
    std::vector<EpisodeRecord> data;
    data.reserve(pc.n_play_episodes);
    for (int i = 0; i < pc.n_play_episodes; ++i) {
        Rng rng(derive_seed(cfg.seed, 101, i));
        GridPos start{uniform_int(rng, kGridSize), uniform_int(rng, kGridSize)};
        data.push_back(play_rollout(rng, pc.play_episode_length, start));
    }
    res.dataset_path = cfg.out_dir + "/play_data.jsonl";
    save_episodes(data, res.dataset_path);

    // seeded shuffle, then hold out the tail fraction
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, 102));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    int n_holdout = std::max(1, static_cast<int>(std::lround(pc.holdout_fraction * data.size())));
    std::vector<int> train_idx(order.begin(), order.end() - n_holdout);
    std::vector<int> hold_idx(order.end() - n_holdout, order.end());

    PolicyNet net = PolicyNet::init(cfg.net, derive_seed(cfg.seed, 103));
    AdamState adam = AdamState::init(net.n_params());

    auto make_batch = [&](const std::vector<int>& idx, size_t lo, size_t hi) {
        std::vector<const EpisodeRecord*> eps;
        int labeled = 0;
        for (size_t k = lo; k < hi; ++k) {
            eps.push_back(&data[idx[k]]);
            labeled += data[idx[k]].length;
        }
        std::vector<double> w(eps.size(), 1.0);
        return batch_from_episodes<float>(eps, w, labeled, cfg.net.max_seq);
    };

    Rng epoch_rng(derive_seed(cfg.seed, 104));
    double train_loss = 0.0;
    for (int epoch = 0; epoch < pc.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), epoch_rng);
        for (size_t lo = 0; lo < train_idx.size(); lo += pc.batch_size) {
            size_t hi = std::min(train_idx.size(), lo + pc.batch_size);
            TrainBatch batch = make_batch(train_idx, lo, hi);
            train_loss = bc_step(net, adam, batch, pc.lr);
            res.loss_curve.push_back(train_loss);
        }
    }
    res.final_train_loss = train_loss;
    {
        TrainBatch hold = make_batch(hold_idx, 0, hold_idx.size());
        res.final_holdout_loss = net.compute_loss(hold);
    }

    res.model_path = cfg.model_path.empty() ? cfg.out_dir + "/pretrained.tmdpnet" : cfg.model_path;
    json lineage = {{"master_seed", cfg.seed},
                    {"data_stream", 101},
                    {"shuffle_stream", 102},
                    {"init_stream", 103},
                    {"epoch_stream", 104}};
    save_model(net, &adam, res.model_path, lineage.dump());

    {
        std::ofstream csv(cfg.out_dir + "/bc_loss.csv");
        csv << "step,loss\n";
        for (size_t i = 0; i < res.loss_curve.size(); ++i)
            csv << i << ',' << fmt(res.loss_curve[i]) << '\n';
    }

    res.manifest_path = cfg.out_dir + "/pretrain_manifest.json";
    json manifest;
    manifest["config"] = json::parse(to_json(cfg));
    manifest["dataset"] = {{"path", res.dataset_path},
                           {"episodes", data.size()},
                           {"fnv1a", file_hash_hex(res.dataset_path)}};
    manifest["final_train_loss"] = res.final_train_loss;
    manifest["final_holdout_loss"] = res.final_holdout_loss;
    manifest["optimizer_steps"] = adam.step;
    manifest["model_path"] = res.model_path;
    std::ofstream(res.manifest_path) << manifest.dump(2) << "\n";
    return res;
}

// ---------------------------------------------------------------------------
// pretrained-model validation

namespace {

CampaignStats campaign_stats(const std::vector<EpisodeRecord>& eps) {
    CampaignStats st;
    st.episodes = static_cast<int>(eps.size());
    long specials = 0, steps = 0, wins = 0;
    for (const auto& e : eps) {
        wins += e.success ? 1 : 0;
        steps += e.length;
        st.mean_length += e.length;
        for (const auto& s : e.steps) specials += is_special(s.action) ? 1 : 0;
    }
    st.success_rate = static_cast<double>(wins) / std::max(1, st.episodes);
    st.thinking_fraction = steps > 0 ? static_cast<double>(specials) / steps : 0.0;
    st.mean_length /= std::max(1, st.episodes);
    wilson_interval(wins, st.episodes, &st.ci_low, &st.ci_high);
    return st;
}

std::vector<uint64_t> episode_seeds(uint64_t master, uint64_t stream, int n) {
    std::vector<uint64_t> seeds(n);
    for (int i = 0; i < n; ++i) seeds[i] = derive_seed(master, stream, i);
    return seeds;
}

}  // namespace

std::string ValidatePretrainReport::json() const {
    auto to_j = [](const CampaignStats& s) {
        return nlohmann::json{{"success_rate", s.success_rate},  {"ci_low", s.ci_low},
                              {"ci_high", s.ci_high},            {"thinking_fraction", s.thinking_fraction},
                              {"mean_length", s.mean_length},    {"episodes", s.episodes}};
    };
    nlohmann::json j;
    j["free_rollout"] = to_j(free_rollout);
    j["forced_prompt"] = to_j(forced_prompt);
    j["forced_masked"] = to_j(forced_masked);
    j["forced_masked_alternate"] = to_j(forced_masked_alternate);
    j["corner_within_15_rate"] = corner_within_15_rate;
    return j.dump(2);
}

ValidatePretrainReport validate_pretrain(const PolicyNet& net, const ExperimentConfig& cfg,
                                         int episodes_per_campaign) {
    ValidatePretrainReport rep;
    RolloutBatchSpec spec;
    spec.cue = 'C';
    spec.start = cfg.grid.start;
    spec.cap = cfg.grid.episode_cap;

    spec.episode_seeds = episode_seeds(cfg.seed, 301, episodes_per_campaign);
    std::vector<EpisodeRecord> free_eps = sample_episodes(net, spec);
    rep.free_rollout = campaign_stats(free_eps);

    spec.force = ForceMode::PromptAThenB;
    spec.episode_seeds = episode_seeds(cfg.seed, 302, episodes_per_campaign);
    rep.forced_prompt = campaign_stats(sample_episodes(net, spec));

    spec.mask = MaskMode::All;
    spec.episode_seeds = episode_seeds(cfg.seed, 303, episodes_per_campaign);
    rep.forced_masked = campaign_stats(sample_episodes(net, spec));

    spec.mask = MaskMode::AlternateOdd;
    spec.episode_seeds = episode_seeds(cfg.seed, 304, episodes_per_campaign);
    rep.forced_masked_alternate = campaign_stats(sample_episodes(net, spec));

    int corner_hits = 0;
    for (const auto& e : free_eps) {
        auto positions = replay_positions(e);
        int limit = std::min<int>(15, static_cast<int>(positions.size()) - 1);
        for (int t = 0; t <= limit; ++t)
            if (positions[t] == GridPos{4, 4} || positions[t] == GridPos{0, 0}) {
                ++corner_hits;
                break;
            }
    }
    rep.corner_within_15_rate =
        static_cast<double>(corner_hits) / std::max<size_t>(1, free_eps.size());
    return rep;
}

// ---------------------------------------------------------------------------
// REINFORCE training

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "trial,iteration,success_rate,thinking_fraction,mean_length\n";
    for (const auto& r : rows)
        out << r.trial << ',' << r.iteration << ',' << fmt(r.success_rate) << ','
            << fmt(r.thinking_fraction) << ',' << fmt(r.mean_length) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty metrics file " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricsRow r;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &r.trial, &r.iteration, &r.success_rate,
                        &r.thinking_fraction, &r.mean_length) != 5)
            throw std::runtime_error("bad metrics row in " + path + ": " + line);
        rows.push_back(r);
    }
    return rows;
}

TrainResult train(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const bool pretrained = cfg.condition == Condition::PretrainedThink ||
                            cfg.condition == Condition::PretrainedNoThink;
    const bool masked = cfg.condition == Condition::PretrainedNoThink ||
                        cfg.condition == Condition::ScratchNoThink;
    if (pretrained && cfg.model_path.empty())
        throw std::invalid_argument("train: pretrained conditions need a model path");

    TrainResult result;
    const uint64_t cond_id = static_cast<uint64_t>(cfg.condition);
    for (int trial = 0; trial < cfg.trials; ++trial) {
        PolicyNet net = pretrained
                            ? load_model(cfg.model_path, &cfg.net).net
                            : PolicyNet::init(cfg.net, derive_seed(cfg.seed, 400 + cond_id, trial));
        AdamState adam = AdamState::init(net.n_params());

        std::vector<MetricsRow> rows;
        rows.reserve(cfg.iterations);
        for (int iter = 1; iter <= cfg.iterations; ++iter) {
            RolloutBatchSpec spec;
            spec.cue = 'C';
            spec.start = cfg.grid.start;
            spec.cap = cfg.grid.episode_cap;
            spec.mask = masked ? MaskMode::All : MaskMode::None;
            spec.episode_seeds.resize(cfg.episodes_per_iteration);
            for (int e = 0; e < cfg.episodes_per_iteration; ++e)
                spec.episode_seeds[e] = derive_seed(cfg.seed, 500 + cond_id, trial,
                                                    static_cast<uint64_t>(iter) * 100000 + e);
            std::vector<EpisodeRecord> episodes = sample_episodes(net, spec);
            ReinforceStats stats = reinforce_step(net, adam, episodes, cfg.rl_lr);
            rows.push_back({trial, iter, stats.mean_return, stats.thinking_fraction,
                            stats.mean_length});
        }

        std::string base = cfg.out_dir + "/metrics_" + condition_name(cfg.condition) + "_trial" +
                           std::to_string(trial);
        write_metrics_csv(rows, base + ".csv");
        std::string model_path = cfg.out_dir + "/model_" + condition_name(cfg.condition) +
                                 "_trial" + std::to_string(trial) + ".tmdpnet";
        json lineage = {{"master_seed", cfg.seed},
                        {"condition", condition_name(cfg.condition)},
                        {"trial", trial}};
        save_model(net, nullptr, model_path, lineage.dump());
        result.metrics_paths.push_back(base + ".csv");
        result.model_paths.push_back(model_path);
        result.rows.push_back(std::move(rows));
    }

    json manifest;
    manifest["config"] = json::parse(to_json(cfg));
    manifest["metrics"] = result.metrics_paths;
    manifest["models"] = result.model_paths;
    if (pretrained) manifest["pretrained_model_fnv1a"] = file_hash_hex(cfg.model_path);
    std::ofstream(cfg.out_dir + "/train_manifest_" + condition_name(cfg.condition) + ".json")
        << manifest.dump(2) << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// reporting

namespace {

AggregateSeries aggregate_metric(const std::vector<std::vector<double>>& per_trial,
                                 const std::vector<int>& iterations, Rng& boot_rng, int resamples) {
    AggregateSeries series;
    series.iterations = iterations;
    const int trials = static_cast<int>(per_trial.size());
    const int n_iter = static_cast<int>(iterations.size());
    series.mean.resize(n_iter);
    series.ci_low.resize(n_iter);
    series.ci_high.resize(n_iter);

    // resampled trial indices are shared across iterations so bands are
    // consistent along the x axis
    std::vector<std::vector<int>> draws(resamples, std::vector<int>(trials));
    for (auto& d : draws)
        for (int& v : d) v = uniform_int(boot_rng, trials);

    std::vector<double> boot(resamples);
    for (int i = 0; i < n_iter; ++i) {
        double m = 0.0;
        for (int tr = 0; tr < trials; ++tr) m += per_trial[tr][i];
        series.mean[i] = m / trials;
        for (int b = 0; b < resamples; ++b) {
            double s = 0.0;
            for (int v : draws[b]) s += per_trial[v][i];
            boot[b] = s / trials;
        }
        std::sort(boot.begin(), boot.end());
        series.ci_low[i] = boot[static_cast<size_t>(std::floor(0.025 * (resamples - 1)))];
        series.ci_high[i] = boot[static_cast<size_t>(std::ceil(0.975 * (resamples - 1)))];
    }
    return series;
}

const char* condition_color(const std::string& name) {
    if (name == "Pretrained-Think") return "#1f77b4";
    if (name == "Pretrained-NoThink") return "#ff7f0e";
    if (name == "Scratch-Think") return "#2ca02c";
    if (name == "Scratch-NoThink") return "#d62728";
    return "#555555";
}

void plot_metric(const std::vector<ConditionAggregate>& conds,
                 AggregateSeries ConditionAggregate::*member, const std::string& title,
                 double ymax_hint, const std::string& path) {
    const double W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 50;
    SvgWriter svg(W, H);
    double xmax = 1, ymax = ymax_hint;
    for (const auto& c : conds) {
        const AggregateSeries& s = c.*member;
        if (!s.iterations.empty()) xmax = std::max(xmax, static_cast<double>(s.iterations.back()));
        for (double v : s.ci_high) ymax = std::max(ymax, v);
    }
    ymax *= 1.05;
    auto X = [&](double it) { return ml + (W - ml - mr) * it / xmax; };
    auto Y = [&](double v) { return H - mb - (H - mt - mb) * v / ymax; };

    svg.rect(ml, mt, W - ml - mr, H - mt - mb, "#fafafa", "#999", 1.0);
    for (int g = 0; g <= 4; ++g) {
        double v = ymax * g / 4.0;
        svg.line(ml, Y(v), W - mr, Y(v), "#dddddd", 0.8);
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.2f", v);
        svg.text(ml - 6, Y(v) + 4, lab, 10, "end");
    }
    for (int g = 0; g <= 5; ++g) {
        double it = xmax * g / 5.0;
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.0f", it);
        svg.text(X(it), H - mb + 16, lab, 10, "middle");
    }
    svg.text(W / 2, H - 12, "iteration", 12, "middle");
    svg.text(W / 2, mt - 14, title, 14, "middle");

    double legend_y = mt + 14;
    for (const auto& c : conds) {
        const AggregateSeries& s = c.*member;
        if (s.iterations.empty()) continue;
        std::string color = condition_color(c.condition);
        std::vector<std::pair<double, double>> band;
        for (size_t i = 0; i < s.iterations.size(); ++i)
            band.push_back({X(s.iterations[i]), Y(s.ci_high[i])});
        for (size_t i = s.iterations.size(); i-- > 0;)
            band.push_back({X(s.iterations[i]), Y(s.ci_low[i])});
        svg.polygon(band, color, 0.18);
        std::vector<std::pair<double, double>> line;
        for (size_t i = 0; i < s.iterations.size(); ++i)
            line.push_back({X(s.iterations[i]), Y(s.mean[i])});
        svg.polyline(line, color, 1.8);
        svg.line(ml + 8, legend_y - 4, ml + 28, legend_y - 4, color, 3.0);
        svg.text(ml + 34, legend_y, c.condition, 11);
        legend_y += 16;
    }
    svg.save(path);
}

}  // namespace

ReportResult report(const std::string& in_dir, const std::string& out_dir, uint64_t bootstrap_seed,
                    int bootstrap_resamples) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    // collect metrics_<condition>_trial<k>.csv grouped by condition
    std::map<std::string, std::vector<fs::path>> by_condition;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("metrics_", 0) != 0 || entry.path().extension() != ".csv") continue;
        std::string rest = name.substr(8, name.size() - 8 - 4);
        size_t us = rest.rfind("_trial");
        if (us == std::string::npos) continue;
        by_condition[rest.substr(0, us)].push_back(entry.path());
    }
    if (by_condition.empty()) throw std::runtime_error("report: no metrics CSVs found in " + in_dir);

    ReportResult res;
    Rng boot_rng(bootstrap_seed);
    for (auto& [cond, paths] : by_condition) {
        std::sort(paths.begin(), paths.end());
        ConditionAggregate agg;
        agg.condition = cond;
        std::vector<std::vector<double>> succ, think, len;
        std::vector<int> iterations;
        for (const auto& p : paths) {
            std::vector<MetricsRow> rows = read_metrics_csv(p.string());
            std::vector<int> iters;
            std::vector<double> s, th, ln;
            for (const auto& r : rows) {
                iters.push_back(r.iteration);
                s.push_back(r.success_rate);
                th.push_back(r.thinking_fraction);
                ln.push_back(r.mean_length);
            }
            if (iterations.empty()) iterations = iters;
            else if (iterations != iters)
                throw std::runtime_error("report: mismatched iteration grids in " + p.string());
            succ.push_back(std::move(s));
            think.push_back(std::move(th));
            len.push_back(std::move(ln));
            agg.auc_per_trial.push_back(
                std::accumulate(succ.back().begin(), succ.back().end(), 0.0) / succ.back().size());
        }
        agg.success_rate = aggregate_metric(succ, iterations, boot_rng, bootstrap_resamples);
        agg.thinking_fraction = aggregate_metric(think, iterations, boot_rng, bootstrap_resamples);
        agg.mean_length = aggregate_metric(len, iterations, boot_rng, bootstrap_resamples);
        res.conditions.push_back(std::move(agg));
    }

    res.aggregate_csv_path = out_dir + "/aggregate.csv";
    {
        std::ofstream out(res.aggregate_csv_path);
        out << "condition,iteration,success_rate_mean,success_rate_lo,success_rate_hi,"
               "thinking_fraction_mean,thinking_fraction_lo,thinking_fraction_hi,"
               "mean_length_mean,mean_length_lo,mean_length_hi\n";
        for (const auto& c : res.conditions)
            for (size_t i = 0; i < c.success_rate.iterations.size(); ++i)
                out << c.condition << ',' << c.success_rate.iterations[i] << ','
                    << fmt(c.success_rate.mean[i]) << ',' << fmt(c.success_rate.ci_low[i]) << ','
                    << fmt(c.success_rate.ci_high[i]) << ',' << fmt(c.thinking_fraction.mean[i])
                    << ',' << fmt(c.thinking_fraction.ci_low[i]) << ','
                    << fmt(c.thinking_fraction.ci_high[i]) << ',' << fmt(c.mean_length.mean[i])
                    << ',' << fmt(c.mean_length.ci_low[i]) << ',' << fmt(c.mean_length.ci_high[i])
                    << '\n';
    }
    struct Spec {
        AggregateSeries ConditionAggregate::*member;
        const char* title;
        double ymax;
        const char* file;
    };
    for (const Spec& sp : {Spec{&ConditionAggregate::success_rate, "Success Rate", 1.0, "success_rate.svg"},
                           Spec{&ConditionAggregate::thinking_fraction, "Thinking Time", 0.5, "thinking_fraction.svg"},
                           Spec{&ConditionAggregate::mean_length, "Mean Episode Length", 10.0, "mean_length.svg"}}) {
        std::string path = out_dir + "/" + sp.file;
        plot_metric(res.conditions, sp.member, sp.title, sp.ymax, path);
        res.svg_paths.push_back(path);
    }
    return res;
}

}  // namespace tmdp
