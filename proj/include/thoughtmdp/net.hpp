#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "thoughtmdp/grid.hpp"
#include "thoughtmdp/rng.hpp"

namespace tmdp {

// Token ids, dense 0..35: begin, the three cue tokens, the seven action
// tokens (matching GridAction order), then the 25 position tokens row-major.
// The mapping is versioned; model containers record the version and loaders
// reject a mismatch.
struct TokenVocab {
    static constexpr int kBegin = 0;
    static constexpr int kSize = 36;
    static constexpr const char* kVersion = "v1";

    static int cue_token(char cue);             // 'A' -> 1, 'B' -> 2, 'C' -> 3
    static int action_token(GridAction a);      // 4 .. 10
    static int pos_token(GridPos p);            // 11 .. 35
};

// History encoding [begin, cue, pos0, act0, ..., pos_t]: next-token
// prediction at the trailing position token yields the action distribution
// for step t. Token count after t steps is 2t + 3.
std::vector<int> encode_history(char cue, const std::vector<EpisodeStep>& steps, GridPos current,
                                int max_seq = 128);

struct EncodedEpisode {
    std::vector<int> tokens;  // [begin, cue, pos0, act0, ..., pos_{L-1}]  (2L + 1 tokens)
    std::vector<int> labels;  // action index at every pos-token index, -1 elsewhere
};
EncodedEpisode encode_episode(const EpisodeRecord& episode, int max_seq = 128);

struct PolicyNetConfig {
    int vocab = TokenVocab::kSize;
    int n_actions = kNumGridActions;
    int width = 64;
    int blocks = 2;
    int heads = 4;
    int ffn = 256;
    int max_seq = 128;

    bool operator==(const PolicyNetConfig&) const = default;
    int head_dim() const { return width / heads; }
};

// All learned tensors. for_each visits them in declared order, which is the
// serialization order of the model container.
template <typename S>
struct NetParamsT {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

    Mat wtok;  // width x vocab
    Mat wpos;  // width x max_seq
    struct Block {
        Vec ln1_g, ln1_b;
        Mat wqkv;  // 3*width x width
        Vec bqkv;
        Mat wo;    // width x width
        Vec bo;
        Vec ln2_g, ln2_b;
        Mat w1;    // ffn x width
        Vec b1;
        Mat w2;    // width x ffn
        Vec b2;
    };
    std::vector<Block> blocks;
    Vec lnf_g, lnf_b;
    Mat whead;  // n_actions x width
    Vec bhead;

    void allocate(const PolicyNetConfig& cfg);
    void set_zero();
    long n_params() const;

    // visits (name, data, size) over every tensor in declared order
    template <typename F>
    void for_each(F&& f) {
        f("wtok", wtok.data(), wtok.size());
        f("wpos", wpos.data(), wpos.size());
        for (size_t l = 0; l < blocks.size(); ++l) {
            auto& b = blocks[l];
            std::string p = "block" + std::to_string(l) + ".";
            f((p + "ln1_g").c_str(), b.ln1_g.data(), b.ln1_g.size());
            f((p + "ln1_b").c_str(), b.ln1_b.data(), b.ln1_b.size());
            f((p + "wqkv").c_str(), b.wqkv.data(), b.wqkv.size());
            f((p + "bqkv").c_str(), b.bqkv.data(), b.bqkv.size());
            f((p + "wo").c_str(), b.wo.data(), b.wo.size());
            f((p + "bo").c_str(), b.bo.data(), b.bo.size());
            f((p + "ln2_g").c_str(), b.ln2_g.data(), b.ln2_g.size());
            f((p + "ln2_b").c_str(), b.ln2_b.data(), b.ln2_b.size());
            f((p + "w1").c_str(), b.w1.data(), b.w1.size());
            f((p + "b1").c_str(), b.b1.data(), b.b1.size());
            f((p + "w2").c_str(), b.w2.data(), b.w2.size());
            f((p + "b2").c_str(), b.b2.data(), b.b2.size());
        }
        f("lnf_g", lnf_g.data(), lnf_g.size());
        f("lnf_b", lnf_b.data(), lnf_b.size());
        f("whead", whead.data(), whead.size());
        f("bhead", bhead.data(), bhead.size());
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<NetParamsT*>(this)->for_each(
            [&](const char* n, S* d, long sz) { f(n, const_cast<const S*>(d), sz); });
    }
};

// Padded training batch. Loss is (1/normalizer) * sum over labeled positions
// of weight * cross-entropy; padding carries label -1 and contributes nothing.
template <typename S>
struct TrainBatchT {
    int batch = 0;
    int seq = 0;
    std::vector<int> tokens;   // [b * seq + t]
    std::vector<int> labels;   // [b * seq + t], -1 where no loss
    std::vector<S> weights;    // [b * seq + t]
    double normalizer = 1.0;
};

// Pre-norm causal transformer over episode-history tokens with a
// next-action head. Deterministic and pure given parameters; strictly
// causal (logits at position i depend only on tokens at positions <= i).
template <typename S>
struct PolicyNetT {
    using Mat = typename NetParamsT<S>::Mat;

    PolicyNetConfig cfg;
    NetParamsT<S> params;

    // GPT-2 style init: weights N(0, 0.02), biases zero, layer-norm gains one.
    static PolicyNetT init(const PolicyNetConfig& cfg, uint64_t seed);

    long n_params() const { return params.n_params(); }

    // logits for every position of a single sequence (n_actions x T)
    Mat forward_all(const std::vector<int>& tokens) const;
    // logits at the last position only
    std::vector<S> forward_last(const std::vector<int>& tokens) const;

    // forward-only batch loss
    double compute_loss(const TrainBatchT<S>& batch) const;
    // loss plus parameter gradients (grads must be allocated; zeroed here)
    double loss_and_grad(const TrainBatchT<S>& batch, NetParamsT<S>& grads) const;
};

using PolicyNet = PolicyNetT<float>;
using PolicyNetD = PolicyNetT<double>;
using TrainBatch = TrainBatchT<float>;

// Adaptive-moment optimizer state; moments are kept in double regardless of
// the parameter scalar. An all-zero gradient advances only the step counter
// and leaves parameters untouched.
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<double> m, v;

    static AdamState init(long n_params);
};

template <typename S>
void adam_step(NetParamsT<S>& params, const NetParamsT<S>& grads, AdamState& state, double lr);

// Thought-action suppression: the A, B, C entries drop by 1e9, cardinal
// entries are untouched.
template <typename S>
void mask_thought(S* logits, int n_actions = kNumGridActions);

// Behavior cloning: mean cross-entropy over the batch's labeled action
// positions, one optimizer update. Aborts on non-finite loss.
template <typename S>
double bc_step(PolicyNetT<S>& net, AdamState& adam, const TrainBatchT<S>& batch, double lr = 1e-4);

struct ReinforceStats {
    double mean_return = 0.0;
    double thinking_fraction = 0.0;
    double mean_length = 0.0;
    double loss = 0.0;
    long n_episodes = 0;
};

// Vanilla score-function update: gradient estimate
// (1/N) sum_episodes G * sum_t grad log pi(a_t | history_t) with G the
// terminal return, no baseline, no entropy bonus. Zero-return episodes
// contribute nothing beyond the 1/N normalization. Histories that do not
// replay through grid_step are rejected.
template <typename S>
ReinforceStats reinforce_step(PolicyNetT<S>& net, AdamState& adam,
                              const std::vector<EpisodeRecord>& episodes, double lr = 1e-5);

// Builds a padded batch from complete episodes; weight applies to every
// labeled position of its episode.
template <typename S>
TrainBatchT<S> batch_from_episodes(const std::vector<const EpisodeRecord*>& episodes,
                                   const std::vector<double>& weights, double normalizer,
                                   int max_seq = 128);

struct GradCheckResult {
    double max_rel_error = 0.0;
    long n_checked = 0;
};

// Central finite differences on a random subsample of parameters against
// analytic gradients; loss_fn re-evaluates the loss at the net's current
// parameters (which are perturbed in place and restored).
GradCheckResult grad_check(PolicyNetD& net, const std::function<double()>& loss_fn,
                           const NetParamsT<double>& analytic, double eps = 1e-4,
                           double subsample = 0.01, uint64_t seed = 0);

// Model container: 8-byte magic "TMDPNET1", a length-prefixed JSON metadata
// header (config, vocab version, seed lineage), then raw little-endian
// 32-bit-float parameter blocks in declared order; optimizer moments, when
// present, follow as 64-bit floats. Round-trips are bit-exact.
void save_model(const PolicyNet& net, const AdamState* adam, const std::string& path,
                const std::string& seed_lineage_json = "{}");

struct LoadedModel {
    PolicyNet net;
    std::optional<AdamState> adam;
    std::string meta_json;
};

// `expected` (when given) is checked against the stored config; a mismatch
// is rejected naming the offending field.
LoadedModel load_model(const std::string& path, const PolicyNetConfig* expected = nullptr);

}  // namespace tmdp
