#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "thoughtmdp/chain.hpp"
#include "thoughtmdp/harness.hpp"
#include "thoughtmdp/horizon.hpp"
#include "thoughtmdp/net.hpp"
#include "thoughtmdp/solver.hpp"

using namespace tmdp;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

ExperimentConfig load_config(const std::string& config_path) {
    if (config_path.empty()) return {};
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return experiment_config_from_json(ss.str());
}

// shared flag set for the grid subcommands; flags override config-file values
struct GridFlags {
    std::string config_path;
    std::string out_dir;
    std::string model_path;
    std::string condition;
    int iterations = -1;
    int episodes = -1;
    int trials = -1;
    int cap = -1;
    long seed = -1;

    void attach(CLI::App* cmd, bool with_condition) {
        cmd->add_option("--config", config_path, "experiment config JSON");
        cmd->add_option("--out", out_dir, "output directory (default $THOUGHTMDP_OUT or ./out)");
        cmd->add_option("--model", model_path, "model container path");
        cmd->add_option("--iterations", iterations, "policy-improvement iterations");
        cmd->add_option("--episodes", episodes, "episodes collected per iteration");
        cmd->add_option("--trials", trials, "independent trials");
        cmd->add_option("--cap", cap, "episode step cap");
        cmd->add_option("--seed", seed, "master seed");
        if (with_condition)
            cmd->add_option("--condition", condition,
                            "Pretrained-Think | Pretrained-NoThink | Scratch-Think | Scratch-NoThink")
                ->required();
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        else if (cfg.out_dir == "out") cfg.out_dir = default_out_dir();
        if (!model_path.empty()) cfg.model_path = model_path;
        if (!condition.empty()) cfg.condition = condition_from_name(condition);
        if (iterations > 0) cfg.iterations = iterations;
        if (episodes > 0) cfg.episodes_per_iteration = episodes;
        if (trials > 0) cfg.trials = trials;
        if (cap > 0) cfg.grid.episode_cap = cap;
        if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"thoughtmdp: tabular thought-MDP solvers and the gridworld learning pipeline"};
    app.require_subcommand(1);

    // chain run
    auto* chain_cmd = app.add_subcommand("chain", "the two-row chain example");
    auto* chain_run = chain_cmd->add_subcommand("run", "run policy iteration and emit snapshots");
    int chain_states = 10;
    double chain_gamma = 0.9;
    std::string chain_snapshots = "1,4,10";
    std::string chain_out;
    chain_run->add_option("--states", chain_states, "number of env states");
    chain_run->add_option("--gamma", chain_gamma, "discount factor");
    chain_run->add_option("--snapshots", chain_snapshots, "comma-separated iteration list");
    chain_run->add_option("--out", chain_out, "output directory");

    // horizon estimate
    auto* horizon_cmd = app.add_subcommand("horizon", "effective-horizon estimation");
    auto* horizon_est = horizon_cmd->add_subcommand("estimate", "Monte Carlo goal-probability estimates");
    std::string h_mdp, h_policy;
    int h_T = 20, h_s = 0, h_tau = 0;
    long h_rollouts = 100000, h_seed = 1;
    horizon_est->add_option("--mdp", h_mdp, "goal thought MDP JSON")->required();
    horizon_est->add_option("--policy", h_policy, "policy JSON")->required();
    horizon_est->add_option("--T", h_T, "horizon");
    horizon_est->add_option("--rollouts", h_rollouts, "rollouts per action");
    horizon_est->add_option("--seed", h_seed, "seed");
    horizon_est->add_option("--s", h_s, "start env state");
    horizon_est->add_option("--tau", h_tau, "start thought state");

    // grid pretrain / validate-pretrain / train
    auto* grid_cmd = app.add_subcommand("grid", "gridworld learning pipeline");
    auto* grid_pre = grid_cmd->add_subcommand("pretrain", "behavior-clone the play agent");
    GridFlags pre_flags;
    pre_flags.attach(grid_pre, false);
    auto* grid_val = grid_cmd->add_subcommand("validate-pretrain", "forced-prompt validation campaigns");
    GridFlags val_flags;
    int val_episodes = 500;
    val_flags.attach(grid_val, false);
    grid_val->add_option("--campaign-episodes", val_episodes, "episodes per campaign");
    auto* grid_train = grid_cmd->add_subcommand("train", "REINFORCE fine-tuning on task C");
    GridFlags train_flags;
    train_flags.attach(grid_train, true);

    // report
    auto* report_cmd = app.add_subcommand("report", "aggregate metrics CSVs into plots");
    std::string rep_in, rep_out;
    long rep_seed = 17;
    report_cmd->add_option("--in", rep_in, "directory holding metrics_*.csv")->required();
    report_cmd->add_option("--out", rep_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (chain_run->parsed()) {
            if (chain_out.empty()) chain_out = default_out_dir();
            ChainReproduction rep =
                reproduce_figure({chain_states, chain_gamma}, parse_int_list(chain_snapshots), chain_out);
            std::printf("converged in %d improvement steps\n", rep.result.iterations);
            std::printf("trace: %s\n", rep.trace_csv_path.c_str());
            for (const auto& p : rep.snapshot_svg_paths) std::printf("snapshot: %s\n", p.c_str());
        } else if (horizon_est->parsed()) {
            GoalThoughtMdp g = make_goal_thought_mdp(load_mdp(h_mdp));
            TabularPolicy pi = load_policy(h_policy);
            std::cout << horizon_estimate_json(g, pi, h_s, h_tau, h_T, h_rollouts,
                                               static_cast<uint64_t>(h_seed))
                      << "\n";
        } else if (grid_pre->parsed()) {
            ExperimentConfig cfg = pre_flags.resolve();
            PretrainResult res = pretrain(cfg);
            std::printf("model: %s\n", res.model_path.c_str());
            std::printf("dataset: %s\n", res.dataset_path.c_str());
            std::printf("manifest: %s\n", res.manifest_path.c_str());
            std::printf("final train loss %.4f, holdout loss %.4f\n", res.final_train_loss,
                        res.final_holdout_loss);
        } else if (grid_val->parsed()) {
            ExperimentConfig cfg = val_flags.resolve();
            if (cfg.model_path.empty())
                throw std::runtime_error("validate-pretrain needs --model (or model_path in config)");
            PolicyNet net = load_model(cfg.model_path, &cfg.net).net;
            ValidatePretrainReport rep = validate_pretrain(net, cfg, val_episodes);
            std::cout << rep.json() << "\n";
        } else if (grid_train->parsed()) {
            ExperimentConfig cfg = train_flags.resolve();
            TrainResult res = train(cfg);
            for (const auto& p : res.metrics_paths) std::printf("metrics: %s\n", p.c_str());
            for (const auto& p : res.model_paths) std::printf("model: %s\n", p.c_str());
        } else if (report_cmd->parsed()) {
            if (rep_out.empty()) rep_out = default_out_dir();
            ReportResult res = report(rep_in, rep_out, static_cast<uint64_t>(rep_seed));
            std::printf("aggregate: %s\n", res.aggregate_csv_path.c_str());
            for (const auto& p : res.svg_paths) std::printf("plot: %s\n", p.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
