#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "thoughtmdp/harness.hpp"

using namespace tmdp;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("harness");

namespace {

// miniature setup: tiny net, short episodes, few iterations
ExperimentConfig mini_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.out_dir = out_dir;
    cfg.seed = 7;
    cfg.iterations = 3;
    cfg.episodes_per_iteration = 12;
    cfg.trials = 2;
    cfg.grid.episode_cap = 20;
    cfg.net.width = 16;
    cfg.net.blocks = 1;
    cfg.net.heads = 2;
    cfg.net.ffn = 32;
    cfg.pretrain.n_play_episodes = 60;
    cfg.pretrain.play_episode_length = 12;
    cfg.pretrain.epochs = 1;
    cfg.pretrain.batch_size = 16;
    return cfg;
}

std::string tmp_dir(const std::string& leaf) {
    fs::path p = fs::temp_directory_path() / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("condition names round trip") {
    for (Condition c : {Condition::PretrainedThink, Condition::PretrainedNoThink,
                        Condition::ScratchThink, Condition::ScratchNoThink})
        CHECK(condition_from_name(condition_name(c)) == c);
    CHECK_THROWS(condition_from_name("Sideways-Think"));
}

TEST_CASE("experiment config JSON round trip") {
    ExperimentConfig cfg = mini_config("somewhere");
    cfg.condition = Condition::ScratchNoThink;
    ExperimentConfig back = experiment_config_from_json(to_json(cfg));
    CHECK(back.condition == Condition::ScratchNoThink);
    CHECK(back.iterations == cfg.iterations);
    CHECK(back.episodes_per_iteration == cfg.episodes_per_iteration);
    CHECK(back.grid.episode_cap == cfg.grid.episode_cap);
    CHECK(back.net.width == cfg.net.width);
    CHECK(back.pretrain.n_play_episodes == cfg.pretrain.n_play_episodes);
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("default out dir honors THOUGHTMDP_OUT") {
    setenv("THOUGHTMDP_OUT", "/tmp/tmdp_env_out", 1);
    CHECK(default_out_dir() == "/tmp/tmdp_env_out");
    unsetenv("THOUGHTMDP_OUT");
    CHECK(default_out_dir() == "out");
}

TEST_CASE("pretrain emits model, dataset, manifest, and a falling loss curve") {
    ExperimentConfig cfg = mini_config(tmp_dir("tmdp_harness_pretrain"));
    cfg.pretrain.n_play_episodes = 200;
    cfg.pretrain.epochs = 3;
    PretrainResult res = pretrain(cfg);
    CHECK(fs::exists(res.model_path));
    CHECK(fs::exists(res.manifest_path));
    CHECK(fs::exists(res.dataset_path));
    CHECK(fs::exists(cfg.out_dir + "/bc_loss.csv"));
    REQUIRE(res.loss_curve.size() > 20);
    // 20-step moving average decreases from start to finish
    auto avg = [&](size_t lo, size_t hi) {
        double s = 0;
        for (size_t i = lo; i < hi; ++i) s += res.loss_curve[i];
        return s / (hi - lo);
    };
    CHECK(avg(res.loss_curve.size() - 20, res.loss_curve.size()) < avg(0, 20));
    CHECK(res.final_holdout_loss < std::log(7.0));  // better than uniform

    std::string manifest = slurp(res.manifest_path);
    CHECK(manifest.find("fnv1a") != std::string::npos);
    CHECK(manifest.find("final_holdout_loss") != std::string::npos);

    // dataset only ever contains tasks A and B
    std::vector<EpisodeRecord> data = load_episodes(res.dataset_path);
    CHECK(data.size() == 200);
    for (const auto& ep : data) {
        CHECK(ep.cue != 'C');
        for (const auto& st : ep.steps) CHECK(st.action != GridAction::C);
    }
}

TEST_CASE("cloning a one-target teacher reaches (4,4) but rarely (0,0)") {
    // dataset with only task A: every step moves toward the bottom-right
    ExperimentConfig cfg = mini_config(tmp_dir("tmdp_harness_onetask"));
    std::vector<EpisodeRecord> data;
    for (int i = 0; i < 300; ++i) {
        Rng rng(derive_seed(3141, i));
        GridPos pos{uniform_int(rng, 5), uniform_int(rng, 5)};
        EpisodeRecord ep;
        ep.cue = 'A';
        for (int t = 0; t < 12; ++t) {
            GridAction a = pos == GridPos{4, 4} ? GridAction::A : optimal_move(pos, {4, 4});
            ep.steps.push_back({pos, a});
            pos = grid_step(pos, a);
        }
        ep.length = 12;
        data.push_back(ep);
    }
    PolicyNet net = PolicyNet::init(cfg.net, 5);
    AdamState adam = AdamState::init(net.n_params());
    std::vector<const EpisodeRecord*> ptrs;
    std::vector<double> w;
    for (auto& e : data) {
        ptrs.push_back(&e);
        w.push_back(1.0);
    }
    TrainBatch batch = batch_from_episodes<float>(ptrs, w, 300.0 * 12, cfg.net.max_seq);
    for (int step = 0; step < 250; ++step) bc_step(net, adam, batch, 1e-3);
    RolloutBatchSpec spec;
    spec.cue = 'A';
    spec.start = {2, 2};
    spec.cap = 20;
    spec.terminate_on_success = false;
    spec.episode_seeds.resize(100);
    for (int i = 0; i < 100; ++i) spec.episode_seeds[i] = derive_seed(99, i);
    auto eps = sample_episodes(net, spec);
    int reach_br = 0, reach_tl = 0;
    for (const auto& e : eps) {
        bool br = false, tl = false;
        for (const GridPos& p : replay_positions(e)) {
            br = br || p == GridPos{4, 4};
            tl = tl || p == GridPos{0, 0};
        }
        reach_br += br;
        reach_tl += tl;
    }
    CHECK(reach_br > 80);
    CHECK(reach_tl < 20);
}

TEST_CASE("train writes per-trial CSVs with the exact column set and deterministic bytes") {
    ExperimentConfig cfg = mini_config(tmp_dir("tmdp_harness_train"));
    cfg.condition = Condition::ScratchThink;
    TrainResult res = train(cfg);
    REQUIRE(res.metrics_paths.size() == 2);
    for (const auto& p : res.metrics_paths) CHECK(fs::exists(p));
    std::string header;
    {
        std::ifstream in(res.metrics_paths[0]);
        std::getline(in, header);
    }
    CHECK(header == "trial,iteration,success_rate,thinking_fraction,mean_length");
    std::vector<MetricsRow> rows = read_metrics_csv(res.metrics_paths[0]);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].trial == 0);
    CHECK(rows[0].iteration == 1);
    CHECK(rows[2].iteration == 3);

    // byte-identical on a re-run with the same config and seeds
    std::string first = slurp(res.metrics_paths[0]);
    ExperimentConfig cfg2 = cfg;
    cfg2.out_dir = tmp_dir("tmdp_harness_train_rerun");
    TrainResult res2 = train(cfg2);
    CHECK(slurp(res2.metrics_paths[0]) == first);
}

TEST_CASE("NoThink runs log zero special actions and zero thinking fraction") {
    ExperimentConfig cfg = mini_config(tmp_dir("tmdp_harness_nothink"));
    cfg.condition = Condition::ScratchNoThink;
    cfg.trials = 1;
    TrainResult res = train(cfg);
    for (const MetricsRow& r : res.rows[0]) CHECK(r.thinking_fraction == 0.0);
}

TEST_CASE("pretrained conditions require a model path") {
    ExperimentConfig cfg = mini_config(tmp_dir("tmdp_harness_nomodel"));
    cfg.condition = Condition::PretrainedThink;
    cfg.model_path.clear();
    CHECK_THROWS_AS(train(cfg), std::invalid_argument);
}

TEST_CASE("report aggregates trials with bootstrap bands and emits SVGs") {
    std::string dir = tmp_dir("tmdp_harness_report");
    // synthesize two conditions x three trials
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<MetricsRow> rows;
        for (int it = 1; it <= 4; ++it)
            rows.push_back({trial, it, 0.1 * it + 0.01 * trial, 0.2, 10.0 + it});
        write_metrics_csv(rows, dir + "/metrics_CondA_trial" + std::to_string(trial) + ".csv");
        rows.clear();
        for (int it = 1; it <= 4; ++it) rows.push_back({trial, it, 0.05 * it, 0.0, 20.0});
        write_metrics_csv(rows, dir + "/metrics_CondB_trial" + std::to_string(trial) + ".csv");
    }
    ReportResult rep = report(dir, dir + "/agg");
    REQUIRE(rep.conditions.size() == 2);
    CHECK(fs::exists(rep.aggregate_csv_path));
    REQUIRE(rep.svg_paths.size() == 3);
    for (const auto& p : rep.svg_paths) {
        CHECK(fs::exists(p));
        CHECK(slurp(p).find("<svg") != std::string::npos);
    }
    const ConditionAggregate& a =
        rep.conditions[0].condition == "CondA" ? rep.conditions[0] : rep.conditions[1];
    CHECK(a.success_rate.mean[0] == doctest::Approx(0.11));
    CHECK(a.success_rate.ci_low[0] >= 0.10);
    CHECK(a.success_rate.ci_high[0] <= 0.12);
    CHECK(a.auc_per_trial.size() == 3);

    SUBCASE("identical trials collapse the CI to zero width") {
        std::string dir2 = tmp_dir("tmdp_harness_report_flat");
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<MetricsRow> rows;
            for (int it = 1; it <= 4; ++it) rows.push_back({trial, it, 0.4, 0.1, 12.0});
            write_metrics_csv(rows, dir2 + "/metrics_Flat_trial" + std::to_string(trial) + ".csv");
        }
        ReportResult flat = report(dir2, dir2 + "/agg");
        for (size_t i = 0; i < flat.conditions[0].success_rate.mean.size(); ++i) {
            CHECK(flat.conditions[0].success_rate.ci_low[i] == 0.4);
            CHECK(flat.conditions[0].success_rate.ci_high[i] == 0.4);
        }
    }
    SUBCASE("a single trial degenerates to the point estimate") {
        std::string dir3 = tmp_dir("tmdp_harness_report_single");
        std::vector<MetricsRow> rows;
        for (int it = 1; it <= 4; ++it) rows.push_back({0, it, 0.3, 0.1, 12.0});
        write_metrics_csv(rows, dir3 + "/metrics_Solo_trial0.csv");
        ReportResult solo = report(dir3, dir3 + "/agg");
        for (size_t i = 0; i < solo.conditions[0].success_rate.mean.size(); ++i) {
            CHECK(solo.conditions[0].success_rate.ci_low[i] == 0.3);
            CHECK(solo.conditions[0].success_rate.ci_high[i] == 0.3);
        }
    }
    SUBCASE("mismatched iteration grids are rejected") {
        std::string dir4 = tmp_dir("tmdp_harness_report_bad");
        std::vector<MetricsRow> rows{{0, 1, 0.1, 0, 5}, {0, 2, 0.1, 0, 5}};
        write_metrics_csv(rows, dir4 + "/metrics_Bad_trial0.csv");
        std::vector<MetricsRow> rows2{{1, 1, 0.1, 0, 5}, {1, 3, 0.1, 0, 5}};
        write_metrics_csv(rows2, dir4 + "/metrics_Bad_trial1.csv");
        CHECK_THROWS(report(dir4, dir4 + "/agg"));
    }
}

TEST_CASE("thinking fraction in metrics is recomputable from raw episodes") {
    ExperimentConfig cfg = mini_config(tmp_dir("tmdp_harness_thinkfrac"));
    PolicyNet net = PolicyNet::init(cfg.net, 15);
    RolloutBatchSpec spec;
    spec.cue = 'C';
    spec.cap = cfg.grid.episode_cap;
    spec.episode_seeds.resize(30);
    for (int e = 0; e < 30; ++e) spec.episode_seeds[e] = derive_seed(cfg.seed, 1, e);
    auto eps = sample_episodes(net, spec);
    AdamState adam = AdamState::init(net.n_params());
    ReinforceStats st = reinforce_step(net, adam, eps, cfg.rl_lr);
    long specials = 0, steps = 0;
    for (const auto& e : eps) {
        steps += e.length;
        for (const auto& s : e.steps) specials += is_special(s.action) ? 1 : 0;
    }
    CHECK(st.thinking_fraction ==
          doctest::Approx(static_cast<double>(specials) / steps).epsilon(1e-12));
}

TEST_SUITE_END();
