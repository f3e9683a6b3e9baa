#include "thoughtmdp/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace tmdp {

namespace {
constexpr float kLnEpsF = 1e-5f;

void layer_norm_cols(const Eigen::MatrixXf& x, const Eigen::VectorXf& g, const Eigen::VectorXf& b,
                     Eigen::MatrixXf& y) {
    y.resize(x.rows(), x.cols());
    for (long j = 0; j < x.cols(); ++j) {
        float mu = x.col(j).mean();
        float var = (x.col(j).array() - mu).square().mean();
        float r = 1.0f / std::sqrt(var + kLnEpsF);
        y.col(j) = (((x.col(j).array() - mu) * r) * g.array() + b.array()).matrix();
    }
}

float gelu_f(float v) {
    const float c = 0.7978845608028654f;
    float u = c * (v + 0.044715f * v * v * v);
    return 0.5f * v * (1.0f + std::tanh(u));
}
}  // namespace

BatchSampler::BatchSampler(const PolicyNet& net, int n_slots)
    : net_(&net), n_slots_(n_slots), len_(n_slots, 0) {
    const int d = net.cfg.width;
    caches_.resize(net.cfg.blocks);
    for (auto& per_block : caches_) {
        per_block.resize(n_slots);
        for (auto& m : per_block) m.resize(2 * d, net.cfg.max_seq);
    }
    logits_.setZero(net.cfg.n_actions, n_slots);
}

void BatchSampler::reset(int slot) { len_[slot] = 0; }

const float* BatchSampler::logits(int slot) const { return logits_.col(slot).data(); }

void BatchSampler::feed(const std::vector<int>& slots, const std::vector<int>& tokens) {
    if (slots.empty()) return;
    if (slots.size() != tokens.size())
        throw std::invalid_argument("BatchSampler::feed: slots/tokens size mismatch");
    const PolicyNetConfig& cfg = net_->cfg;
    const NetParamsT<float>& P = net_->params;
    const int d = cfg.width, H = cfg.heads, hd = cfg.head_dim();
    const int m = static_cast<int>(slots.size());
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    const int t = len_[slots[0]];
    for (int s : slots)
        if (len_[s] != t)
            throw std::logic_error("BatchSampler::feed: slots are not in lockstep");
    if (t >= cfg.max_seq) throw std::length_error("BatchSampler::feed: sequence full");

    x_.resize(d, m);
    for (int i = 0; i < m; ++i) x_.col(i) = P.wtok.col(tokens[i]) + P.wpos.col(t);

    for (int l = 0; l < cfg.blocks; ++l) {
        const auto& B = P.blocks[l];
        layer_norm_cols(x_, B.ln1_g, B.ln1_b, a_);
        qkv_.noalias() = B.wqkv * a_;
        qkv_.colwise() += B.bqkv;

        attn_.resize(d, m);
        for (int i = 0; i < m; ++i) {
            Eigen::MatrixXf& kv = caches_[l][slots[i]];
            kv.col(t).head(d) = qkv_.col(i).segment(d, d);       // K
            kv.col(t).tail(d) = qkv_.col(i).segment(2 * d, d);   // V
            for (int h = 0; h < H; ++h) {
                auto q = qkv_.col(i).segment(h * hd, hd);
                auto K = kv.block(h * hd, 0, hd, t + 1);
                auto V = kv.block(d + h * hd, 0, hd, t + 1);
                Eigen::VectorXf sc = (K.transpose() * q) * scale;
                float mx = sc.maxCoeff();
                Eigen::ArrayXf e = (sc.array() - mx).exp();
                e /= e.sum();
                attn_.col(i).segment(h * hd, hd).noalias() = V * e.matrix();
            }
        }
        x_.noalias() += B.wo * attn_;
        x_.colwise() += B.bo;

        layer_norm_cols(x_, B.ln2_g, B.ln2_b, a_);
        h_.noalias() = B.w1 * a_;
        h_.colwise() += B.b1;
        g_ = h_.unaryExpr([](float v) { return gelu_f(v); });
        x_.noalias() += B.w2 * g_;
        x_.colwise() += B.b2;
    }
    layer_norm_cols(x_, P.lnf_g, P.lnf_b, a_);
    for (int i = 0; i < m; ++i) {
        logits_.col(slots[i]).noalias() = P.whead * a_.col(i);
        logits_.col(slots[i]) += P.bhead;
    }
    for (int s : slots) len_[s] = t + 1;
}

}  // namespace tmdp
