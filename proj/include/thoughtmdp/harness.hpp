#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thoughtmdp/grid.hpp"
#include "thoughtmdp/net.hpp"

namespace tmdp {

enum class Condition { PretrainedThink, PretrainedNoThink, ScratchThink, ScratchNoThink };

std::string condition_name(Condition c);
Condition condition_from_name(const std::string& name);

struct PretrainConfig {
    int n_play_episodes = 5000;
    int play_episode_length = 40;
    int epochs = 20;
    int batch_size = 64;
    double lr = 1e-4;
    double holdout_fraction = 0.1;
};

struct GridRlConfig {
    // 30-step cap, reward 0 at the cap. Optimal task-C episodes run 14 steps
    // from the (2,2) start.
    int episode_cap = 30;
    GridPos start{2, 2};
};

struct ExperimentConfig {
    Condition condition = Condition::PretrainedThink;
    int iterations = 100;
    int episodes_per_iteration = 200;
    int trials = 5;
    uint64_t seed = 2024;
    double rl_lr = 1e-5;
    GridRlConfig grid;
    PolicyNetConfig net;
    PretrainConfig pretrain;
    std::string model_path;  // pretrained container; required for Pretrained-* conditions
    std::string out_dir = "out";
};

std::string to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

struct MetricsRow {
    int trial = 0;
    int iteration = 0;
    double success_rate = 0.0;
    double thinking_fraction = 0.0;
    double mean_length = 0.0;
};

// -- episode sampling ---------------------------------------------------------

enum class MaskMode {
    None,
    All,           // thought actions suppressed on every non-forced step
    AlternateOdd,  // thought actions suppressed on odd step indices
};

enum class ForceMode {
    None,
    // 'A' forced at step 0, 'B' forced on the first arrival at (4,4)
    PromptAThenB,
};

struct RolloutBatchSpec {
    char cue = 'C';
    GridPos start{2, 2};
    int cap = 40;
    MaskMode mask = MaskMode::None;
    ForceMode force = ForceMode::None;
    bool terminate_on_success = true;  // episode ends once task C is satisfied
    std::vector<uint64_t> episode_seeds;
};

// Lockstep batched rollouts through the incremental sampler; deterministic
// per episode seed regardless of batch composition order.
std::vector<EpisodeRecord> sample_episodes(const PolicyNet& net, const RolloutBatchSpec& spec);

// -- pipeline stages ----------------------------------------------------------

struct PretrainResult {
    std::string model_path;
    std::string manifest_path;
    std::string dataset_path;
    double final_train_loss = 0.0;
    double final_holdout_loss = 0.0;
    std::vector<double> loss_curve;  // per optimizer step
};

// Generates play data, clones it into the sequence policy, and saves the
// container plus a JSON run manifest (hyperparameters, seeds, dataset hash).
PretrainResult pretrain(const ExperimentConfig& cfg);

struct CampaignStats {
    double success_rate = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    double thinking_fraction = 0.0;
    double mean_length = 0.0;
    int episodes = 0;
};

struct ValidatePretrainReport {
    CampaignStats free_rollout;            // (i)
    CampaignStats forced_prompt;           // (ii) forced 'A' then 'B'
    CampaignStats forced_masked;           // (iii) forcing plus masking on non-forced steps
    CampaignStats forced_masked_alternate; // alternating-mask diagnostic of the same campaign
    double corner_within_15_rate = 0.0;    // free rollouts reaching some corner within 15 steps
    std::string json() const;
};

ValidatePretrainReport validate_pretrain(const PolicyNet& net, const ExperimentConfig& cfg,
                                         int episodes_per_campaign = 500);

struct TrainResult {
    std::vector<std::string> metrics_paths;  // one CSV per trial
    std::vector<std::string> model_paths;
    std::vector<std::vector<MetricsRow>> rows;  // [trial][iteration-1]
};

// REINFORCE fine-tuning on task C for one condition across `trials` trials.
// Metrics CSVs carry exactly: trial, iteration, success_rate,
// thinking_fraction, mean_length. Identical config and seeds produce
// byte-identical CSVs.
TrainResult train(const ExperimentConfig& cfg);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// -- reporting ----------------------------------------------------------------

struct AggregateSeries {
    std::vector<int> iterations;
    std::vector<double> mean, ci_low, ci_high;
};

struct ConditionAggregate {
    std::string condition;
    AggregateSeries success_rate, thinking_fraction, mean_length;
    std::vector<double> auc_per_trial;  // mean success over the iteration axis
};

struct ReportResult {
    std::vector<ConditionAggregate> conditions;
    std::string aggregate_csv_path;
    std::vector<std::string> svg_paths;
};

// Aggregates metrics_<condition>_trial<k>.csv files under `in_dir`:
// per-iteration mean across trials with a seeded 95% bootstrap interval
// (1000 resamples), one aggregate CSV plus one SVG per metric.
ReportResult report(const std::string& in_dir, const std::string& out_dir,
                    uint64_t bootstrap_seed = 17, int bootstrap_resamples = 1000);

// Default output directory: $THOUGHTMDP_OUT when set, else "out".
std::string default_out_dir();

}  // namespace tmdp
