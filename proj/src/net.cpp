#include "thoughtmdp/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tmdp {

int TokenVocab::cue_token(char cue) {
    switch (cue) {
        case 'A': return 1;
        case 'B': return 2;
        case 'C': return 3;
    }
    throw std::invalid_argument(std::string("unknown cue: ") + cue);
}

int TokenVocab::action_token(GridAction a) { return 4 + static_cast<int>(a); }

int TokenVocab::pos_token(GridPos p) { return 11 + p.row * kGridSize + p.col; }

std::vector<int> encode_history(char cue, const std::vector<EpisodeStep>& steps, GridPos current,
                                int max_seq) {
    std::vector<int> toks;
    toks.reserve(2 * steps.size() + 3);
    toks.push_back(TokenVocab::kBegin);
    toks.push_back(TokenVocab::cue_token(cue));
    for (const auto& st : steps) {
        toks.push_back(TokenVocab::pos_token(st.pos));
        toks.push_back(TokenVocab::action_token(st.action));
    }
    toks.push_back(TokenVocab::pos_token(current));
    if (static_cast<int>(toks.size()) > max_seq)
        throw std::length_error("encode_history: sequence exceeds the model's maximum length");
    return toks;
}

EncodedEpisode encode_episode(const EpisodeRecord& ep, int max_seq) {
    EncodedEpisode enc;
    enc.tokens.reserve(2 * ep.steps.size() + 1);
    enc.tokens.push_back(TokenVocab::kBegin);
    enc.tokens.push_back(TokenVocab::cue_token(ep.cue));
    enc.labels.assign(2, -1);
    for (size_t t = 0; t < ep.steps.size(); ++t) {
        enc.tokens.push_back(TokenVocab::pos_token(ep.steps[t].pos));
        enc.labels.push_back(static_cast<int>(ep.steps[t].action));
        if (t + 1 < ep.steps.size()) {  // the final action token is a target only
            enc.tokens.push_back(TokenVocab::action_token(ep.steps[t].action));
            enc.labels.push_back(-1);
        }
    }
    if (static_cast<int>(enc.tokens.size()) > max_seq)
        throw std::length_error("encode_episode: sequence exceeds the model's maximum length");
    return enc;
}

// ---------------------------------------------------------------------------
// parameters

template <typename S>
void NetParamsT<S>::allocate(const PolicyNetConfig& cfg) {
    const int d = cfg.width, f = cfg.ffn;
    wtok.resize(d, cfg.vocab);
    wpos.resize(d, cfg.max_seq);
    blocks.resize(cfg.blocks);
    for (auto& b : blocks) {
        b.ln1_g.resize(d);
        b.ln1_b.resize(d);
        b.wqkv.resize(3 * d, d);
        b.bqkv.resize(3 * d);
        b.wo.resize(d, d);
        b.bo.resize(d);
        b.ln2_g.resize(d);
        b.ln2_b.resize(d);
        b.w1.resize(f, d);
        b.b1.resize(f);
        b.w2.resize(d, f);
        b.b2.resize(d);
    }
    lnf_g.resize(d);
    lnf_b.resize(d);
    whead.resize(cfg.n_actions, d);
    bhead.resize(cfg.n_actions);
}

template <typename S>
void NetParamsT<S>::set_zero() {
    for_each([](const char*, S* p, long n) { std::fill(p, p + n, S(0)); });
}

template <typename S>
long NetParamsT<S>::n_params() const {
    long total = 0;
    for_each([&](const char*, const S*, long n) { total += n; });
    return total;
}

template <typename S>
PolicyNetT<S> PolicyNetT<S>::init(const PolicyNetConfig& cfg, uint64_t seed) {
    if (cfg.width % cfg.heads != 0)
        throw std::invalid_argument("PolicyNet: width must be divisible by heads");
    PolicyNetT<S> net;
    net.cfg = cfg;
    net.params.allocate(cfg);
    net.params.set_zero();
    Rng rng(seed);
    auto normal_fill = [&](auto& mat) {
        S* p = mat.data();
        for (long i = 0; i < mat.size(); ++i) p[i] = static_cast<S>(0.02 * normal01(rng));
    };
    normal_fill(net.params.wtok);
    normal_fill(net.params.wpos);
    for (auto& b : net.params.blocks) {
        b.ln1_g.setOnes();
        b.ln2_g.setOnes();
        normal_fill(b.wqkv);
        normal_fill(b.wo);
        normal_fill(b.w1);
        normal_fill(b.w2);
    }
    net.params.lnf_g.setOnes();
    normal_fill(net.params.whead);
    return net;
}

// ---------------------------------------------------------------------------
// forward / backward
//
// Activations are feature-major: columns are token positions (d x N with
// N = batch * seq), so each sequence occupies a contiguous column block.

namespace {

constexpr double kLnEps = 1e-5;

template <typename S>
struct LnStats {
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    Vec mean, rstd;  // per column
};

template <typename S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
void layer_norm(const MatT<S>& x, const Eigen::Matrix<S, Eigen::Dynamic, 1>& g,
                const Eigen::Matrix<S, Eigen::Dynamic, 1>& b, MatT<S>& y, LnStats<S>& st) {
    const long d = x.rows(), n = x.cols();
    y.resize(d, n);
    st.mean.resize(n);
    st.rstd.resize(n);
    for (long j = 0; j < n; ++j) {
        S mu = x.col(j).mean();
        S var = (x.col(j).array() - mu).square().mean();
        S r = S(1) / std::sqrt(var + S(kLnEps));
        st.mean[j] = mu;
        st.rstd[j] = r;
        y.col(j) = (((x.col(j).array() - mu) * r) * g.array() + b.array()).matrix();
    }
}

// dx for y = g * (x - mu) * rstd + b, accumulating dg/db.
template <typename S>
void layer_norm_backward(const MatT<S>& x, const Eigen::Matrix<S, Eigen::Dynamic, 1>& g,
                         const LnStats<S>& st, const MatT<S>& dy, MatT<S>& dx,
                         Eigen::Matrix<S, Eigen::Dynamic, 1>& dg,
                         Eigen::Matrix<S, Eigen::Dynamic, 1>& db) {
    const long d = x.rows(), n = x.cols();
    dx.resize(d, n);
    for (long j = 0; j < n; ++j) {
        auto xc = x.col(j).array();
        auto dyc = dy.col(j).array();
        S mu = st.mean[j], r = st.rstd[j];
        Eigen::Array<S, Eigen::Dynamic, 1> xhat = (xc - mu) * r;
        Eigen::Array<S, Eigen::Dynamic, 1> dyh = dyc * g.array();
        dg.array() += dyc * xhat;
        db.array() += dyc;
        S m1 = dyh.mean();
        S m2 = (dyh * xhat).mean();
        dx.col(j) = (r * (dyh - m1 - xhat * m2)).matrix();
    }
}

template <typename S>
S gelu_scalar(S x) {
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    S u = c * (x + S(0.044715) * x * x * x);
    return S(0.5) * x * (S(1) + std::tanh(u));
}

template <typename S>
S gelu_grad_scalar(S x) {
    const S c = S(0.7978845608028654);
    S x2 = x * x;
    S u = c * (x + S(0.044715) * x * x2);
    S t = std::tanh(u);
    S du = c * (S(1) + S(3) * S(0.044715) * x2);
    return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du;
}

template <typename S>
struct BlockActs {
    MatT<S> xin;       // block input
    MatT<S> a1;        // ln1 output
    LnStats<S> ln1;
    MatT<S> qkv;       // 3d x N
    std::vector<MatT<S>> attn_p;  // per (b * heads + h): seq x seq column-softmax
    MatT<S> attn_o;    // d x N, concatenated head outputs
    MatT<S> xmid;      // after attention residual
    MatT<S> a2;        // ln2 output
    LnStats<S> ln2;
    MatT<S> hf;        // ffn pre-activation, f x N
    MatT<S> gf;        // gelu(hf)
};

template <typename S>
struct Workspace {
    int batch = 0, seq = 0;
    MatT<S> x0;
    std::vector<BlockActs<S>> blocks;
    MatT<S> xfin;
    MatT<S> yf;  // final layer norm output
    LnStats<S> lnf;
    MatT<S> logits;  // n_actions x N
};

template <typename S>
void forward_impl(const PolicyNetConfig& cfg, const NetParamsT<S>& P, const std::vector<int>& tokens,
                  int batch, int seq, Workspace<S>& ws) {
    const int d = cfg.width, H = cfg.heads, hd = cfg.head_dim();
    const long N = static_cast<long>(batch) * seq;
    const S scale = S(1) / std::sqrt(S(hd));

    ws.batch = batch;
    ws.seq = seq;
    ws.x0.resize(d, N);
    for (long j = 0; j < N; ++j) {
        int tok = tokens[j];
        int t = static_cast<int>(j % seq);
        ws.x0.col(j) = P.wtok.col(tok) + P.wpos.col(t);
    }

    ws.blocks.resize(cfg.blocks);
    MatT<S> x = ws.x0;
    for (int l = 0; l < cfg.blocks; ++l) {
        auto& B = P.blocks[l];
        auto& A = ws.blocks[l];
        A.xin = x;
        layer_norm<S>(A.xin, B.ln1_g, B.ln1_b, A.a1, A.ln1);
        A.qkv.noalias() = B.wqkv * A.a1;
        A.qkv.colwise() += B.bqkv;

        A.attn_p.assign(static_cast<size_t>(batch) * H, MatT<S>());
        A.attn_o.resize(d, N);
        for (int b = 0; b < batch; ++b) {
            long off = static_cast<long>(b) * seq;
            for (int h = 0; h < H; ++h) {
                auto Q = A.qkv.block(h * hd, off, hd, seq);
                auto K = A.qkv.block(d + h * hd, off, hd, seq);
                auto V = A.qkv.block(2 * d + h * hd, off, hd, seq);
                MatT<S>& Pm = A.attn_p[static_cast<size_t>(b) * H + h];
                Pm.setZero(seq, seq);
                // scores(j, i) = k_j . q_i, column i = query position
                MatT<S> sc = (K.transpose() * Q) * scale;
                for (int i = 0; i < seq; ++i) {
                    S mx = sc(0, i);
                    for (int j = 1; j <= i; ++j) mx = std::max(mx, sc(j, i));
                    S denom = S(0);
                    for (int j = 0; j <= i; ++j) {
                        S e = std::exp(sc(j, i) - mx);
                        Pm(j, i) = e;
                        denom += e;
                    }
                    for (int j = 0; j <= i; ++j) Pm(j, i) /= denom;
                }
                A.attn_o.block(h * hd, off, hd, seq).noalias() = V * Pm;
            }
        }
        A.xmid.noalias() = B.wo * A.attn_o;
        A.xmid.colwise() += B.bo;
        A.xmid += A.xin;

        layer_norm<S>(A.xmid, B.ln2_g, B.ln2_b, A.a2, A.ln2);
        A.hf.noalias() = B.w1 * A.a2;
        A.hf.colwise() += B.b1;
        A.gf = A.hf.unaryExpr([](S v) { return gelu_scalar(v); });
        x.noalias() = B.w2 * A.gf;
        x.colwise() += B.b2;
        x += A.xmid;
    }
    ws.xfin = x;
    layer_norm<S>(ws.xfin, P.lnf_g, P.lnf_b, ws.yf, ws.lnf);
    ws.logits.noalias() = P.whead * ws.yf;
    ws.logits.colwise() += P.bhead;
    for (long j = 0; j < ws.logits.size(); ++j)
        if (!std::isfinite(static_cast<double>(ws.logits.data()[j])))
            throw std::runtime_error("PolicyNet forward produced a non-finite activation");
}

// loss over labeled positions and, when dlogits != nullptr, its gradient
template <typename S>
double batch_loss(const TrainBatchT<S>& batch, const MatT<S>& logits, MatT<S>* dlogits) {
    const long N = static_cast<long>(batch.batch) * batch.seq;
    const int n_act = static_cast<int>(logits.rows());
    if (dlogits) dlogits->setZero(n_act, N);
    double loss = 0.0;
    for (long j = 0; j < N; ++j) {
        int label = batch.labels[j];
        if (label < 0) continue;
        double w = static_cast<double>(batch.weights[j]);
        if (w == 0.0) continue;
        // stable log-softmax in double
        double mx = -1e300;
        for (int k = 0; k < n_act; ++k) mx = std::max(mx, static_cast<double>(logits(k, j)));
        double denom = 0.0;
        for (int k = 0; k < n_act; ++k) denom += std::exp(static_cast<double>(logits(k, j)) - mx);
        double logdenom = std::log(denom) + mx;
        loss += w * (logdenom - static_cast<double>(logits(label, j)));
        if (dlogits) {
            for (int k = 0; k < n_act; ++k) {
                double p = std::exp(static_cast<double>(logits(k, j)) - logdenom);
                (*dlogits)(k, j) = static_cast<S>(w / batch.normalizer * (p - (k == label ? 1.0 : 0.0)));
            }
        }
    }
    return loss / batch.normalizer;
}

template <typename S>
void backward_impl(const PolicyNetConfig& cfg, const NetParamsT<S>& P, const Workspace<S>& ws,
                   const std::vector<int>& tokens, const MatT<S>& dlogits, NetParamsT<S>& G) {
    const int d = cfg.width, H = cfg.heads, hd = cfg.head_dim();
    const int batch = ws.batch, seq = ws.seq;
    const S scale = S(1) / std::sqrt(S(hd));

    G.whead.noalias() += dlogits * ws.yf.transpose();
    G.bhead += dlogits.rowwise().sum();
    MatT<S> dy = P.whead.transpose() * dlogits;
    MatT<S> dx;
    layer_norm_backward<S>(ws.xfin, P.lnf_g, ws.lnf, dy, dx, G.lnf_g, G.lnf_b);

    for (int l = cfg.blocks - 1; l >= 0; --l) {
        const auto& B = P.blocks[l];
        const auto& A = ws.blocks[l];
        auto& GB = G.blocks[l];

        // ffn: x = xmid + w2 gelu(w1 a2 + b1) + b2
        MatT<S> dg = B.w2.transpose() * dx;
        GB.w2.noalias() += dx * A.gf.transpose();
        GB.b2 += dx.rowwise().sum();
        MatT<S> dh = dg.binaryExpr(A.hf, [](S gv, S hv) { return gv * gelu_grad_scalar(hv); });
        MatT<S> da2 = B.w1.transpose() * dh;
        GB.w1.noalias() += dh * A.a2.transpose();
        GB.b1 += dh.rowwise().sum();
        MatT<S> dxmid;
        layer_norm_backward<S>(A.xmid, B.ln2_g, A.ln2, da2, dxmid, GB.ln2_g, GB.ln2_b);
        dxmid += dx;  // residual

        // attention: xmid = xin + wo o + bo
        MatT<S> do_ = B.wo.transpose() * dxmid;
        GB.wo.noalias() += dxmid * A.attn_o.transpose();
        GB.bo += dxmid.rowwise().sum();

        MatT<S> dqkv;
        dqkv.setZero(3 * d, static_cast<long>(batch) * seq);
        for (int b = 0; b < batch; ++b) {
            long off = static_cast<long>(b) * seq;
            for (int h = 0; h < H; ++h) {
                auto Q = A.qkv.block(h * hd, off, hd, seq);
                auto K = A.qkv.block(d + h * hd, off, hd, seq);
                auto V = A.qkv.block(2 * d + h * hd, off, hd, seq);
                const MatT<S>& Pm = A.attn_p[static_cast<size_t>(b) * H + h];
                auto dOh = do_.block(h * hd, off, hd, seq);

                MatT<S> dP = V.transpose() * dOh;       // (seq x seq)
                dqkv.block(2 * d + h * hd, off, hd, seq).noalias() = dOh * Pm.transpose();

                // column-wise softmax backward under the causal mask
                MatT<S> dsc;
                dsc.setZero(seq, seq);
                for (int i = 0; i < seq; ++i) {
                    S dot = S(0);
                    for (int j = 0; j <= i; ++j) dot += Pm(j, i) * dP(j, i);
                    for (int j = 0; j <= i; ++j) dsc(j, i) = Pm(j, i) * (dP(j, i) - dot);
                }
                dqkv.block(h * hd, off, hd, seq).noalias() = (K * dsc) * scale;
                dqkv.block(d + h * hd, off, hd, seq).noalias() = (Q * dsc.transpose()) * scale;
            }
        }
        GB.wqkv.noalias() += dqkv * A.a1.transpose();
        GB.bqkv += dqkv.rowwise().sum();
        MatT<S> da1 = B.wqkv.transpose() * dqkv;
        MatT<S> dxin;
        layer_norm_backward<S>(A.xin, B.ln1_g, A.ln1, da1, dxin, GB.ln1_g, GB.ln1_b);
        dxin += dxmid;  // residual
        dx.swap(dxin);
    }
    // embeddings: x0 = wtok[:, tok] + wpos[:, t], scatter-add per column
    for (int b = 0; b < batch; ++b)
        for (int t = 0; t < seq; ++t) {
            long j = static_cast<long>(b) * seq + t;
            G.wtok.col(tokens[j]) += dx.col(j);
            G.wpos.col(t) += dx.col(j);
        }
}

}  // namespace

template <typename S>
typename PolicyNetT<S>::Mat PolicyNetT<S>::forward_all(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw std::invalid_argument("forward_all: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg.max_seq)
        throw std::length_error("forward_all: sequence exceeds max length");
    for (int t : tokens)
        if (t < 0 || t >= cfg.vocab) throw std::invalid_argument("forward_all: token id out of range");
    Workspace<S> ws;
    forward_impl(cfg, params, tokens, 1, static_cast<int>(tokens.size()), ws);
    return ws.logits;
}

template <typename S>
std::vector<S> PolicyNetT<S>::forward_last(const std::vector<int>& tokens) const {
    Mat logits = forward_all(tokens);
    std::vector<S> out(cfg.n_actions);
    for (int k = 0; k < cfg.n_actions; ++k) out[k] = logits(k, logits.cols() - 1);
    return out;
}

template <typename S>
double PolicyNetT<S>::compute_loss(const TrainBatchT<S>& batch) const {
    Workspace<S> ws;
    forward_impl(cfg, params, batch.tokens, batch.batch, batch.seq, ws);
    return batch_loss<S>(batch, ws.logits, nullptr);
}

template <typename S>
double PolicyNetT<S>::loss_and_grad(const TrainBatchT<S>& batch, NetParamsT<S>& grads) const {
    grads.set_zero();
    Workspace<S> ws;
    forward_impl(cfg, params, batch.tokens, batch.batch, batch.seq, ws);
    MatT<S> dlogits;
    double loss = batch_loss<S>(batch, ws.logits, &dlogits);
    backward_impl(cfg, params, ws, batch.tokens, dlogits, grads);
    return loss;
}

// ---------------------------------------------------------------------------

AdamState AdamState::init(long n_params) {
    AdamState st;
    st.m.assign(n_params, 0.0);
    st.v.assign(n_params, 0.0);
    return st;
}

template <typename S>
void adam_step(NetParamsT<S>& params, const NetParamsT<S>& grads, AdamState& state, double lr) {
    // zero-gradient contract: only the step counter advances
    bool all_zero = true;
    grads.for_each([&](const char*, const S* g, long n) {
        if (!all_zero) return;
        for (long i = 0; i < n; ++i)
            if (g[i] != S(0)) { all_zero = false; return; }
    });
    state.step += 1;
    if (all_zero) return;

    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    long off = 0;
    // walk params and grads in lockstep via the shared declared order
    std::vector<std::pair<S*, long>> pspans;
    params.for_each([&](const char*, S* p, long n) { pspans.emplace_back(p, n); });
    std::vector<std::pair<const S*, long>> gspans;
    grads.for_each([&](const char*, const S* g, long n) { gspans.emplace_back(g, n); });
    for (size_t k = 0; k < pspans.size(); ++k) {
        S* p = pspans[k].first;
        const S* g = gspans[k].first;
        for (long i = 0; i < pspans[k].second; ++i) {
            double gi = static_cast<double>(g[i]);
            double m = state.m[off] = b1 * state.m[off] + (1.0 - b1) * gi;
            double v = state.v[off] = b2 * state.v[off] + (1.0 - b2) * gi * gi;
            double mhat = m / bc1, vhat = v / bc2;
            p[i] = static_cast<S>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + state.eps));
            ++off;
        }
    }
}

template <typename S>
void mask_thought(S* logits, int n_actions) {
    for (int k = static_cast<int>(GridAction::A); k < n_actions; ++k) logits[k] -= S(1e9);
}

template <typename S>
double bc_step(PolicyNetT<S>& net, AdamState& adam, const TrainBatchT<S>& batch, double lr) {
    if (batch.batch <= 0) throw std::invalid_argument("bc_step: empty batch");
    NetParamsT<S> grads;
    grads.allocate(net.cfg);
    double loss = net.loss_and_grad(batch, grads);
    if (!std::isfinite(loss)) throw std::runtime_error("bc_step: non-finite loss");
    adam_step(net.params, grads, adam, lr);
    return loss;
}

template <typename S>
TrainBatchT<S> batch_from_episodes(const std::vector<const EpisodeRecord*>& episodes,
                                   const std::vector<double>& weights, double normalizer,
                                   int max_seq) {
    TrainBatchT<S> batch;
    batch.batch = static_cast<int>(episodes.size());
    batch.normalizer = normalizer;
    int tmax = 1;
    std::vector<EncodedEpisode> encs(episodes.size());
    for (size_t e = 0; e < episodes.size(); ++e) {
        encs[e] = encode_episode(*episodes[e], max_seq);
        tmax = std::max(tmax, static_cast<int>(encs[e].tokens.size()));
    }
    batch.seq = tmax;
    batch.tokens.assign(static_cast<size_t>(batch.batch) * tmax, TokenVocab::kBegin);
    batch.labels.assign(static_cast<size_t>(batch.batch) * tmax, -1);
    batch.weights.assign(static_cast<size_t>(batch.batch) * tmax, S(0));
    for (size_t e = 0; e < encs.size(); ++e) {
        for (size_t t = 0; t < encs[e].tokens.size(); ++t) {
            size_t j = e * tmax + t;
            batch.tokens[j] = encs[e].tokens[t];
            batch.labels[j] = encs[e].labels[t];
            batch.weights[j] = static_cast<S>(weights[e]);
        }
    }
    return batch;
}

namespace {
void check_replayable(const EpisodeRecord& ep) {
    if (ep.steps.empty()) throw std::invalid_argument("reinforce_step: empty episode");
    GridPos pos = ep.steps.front().pos;
    for (const auto& st : ep.steps) {
        if (!(st.pos == pos))
            throw std::invalid_argument("reinforce_step: episode history does not replay");
        pos = grid_step(pos, st.action);
    }
}
}  // namespace

template <typename S>
ReinforceStats reinforce_step(PolicyNetT<S>& net, AdamState& adam,
                              const std::vector<EpisodeRecord>& episodes, double lr) {
    if (episodes.empty()) throw std::invalid_argument("reinforce_step: no episodes");
    ReinforceStats stats;
    stats.n_episodes = static_cast<long>(episodes.size());
    long special_steps = 0, total_steps = 0;
    std::vector<const EpisodeRecord*> winners;
    for (const auto& ep : episodes) {
        check_replayable(ep);
        stats.mean_return += ep.reward;
        stats.mean_length += static_cast<double>(ep.steps.size());
        total_steps += static_cast<long>(ep.steps.size());
        for (const auto& st : ep.steps)
            if (is_special(st.action)) ++special_steps;
        if (ep.reward != 0) winners.push_back(&ep);
    }
    stats.mean_return /= static_cast<double>(episodes.size());
    stats.mean_length /= static_cast<double>(episodes.size());
    stats.thinking_fraction =
        total_steps > 0 ? static_cast<double>(special_steps) / total_steps : 0.0;

    NetParamsT<S> grads;
    grads.allocate(net.cfg);
    if (winners.empty()) {
        // G = 0 annihilates the estimator: exactly zero gradient
        grads.set_zero();
        stats.loss = 0.0;
        adam_step(net.params, grads, adam, lr);
        return stats;
    }
    std::vector<double> weights(winners.size());
    for (size_t i = 0; i < winners.size(); ++i) weights[i] = winners[i]->reward;
    TrainBatchT<S> batch = batch_from_episodes<S>(winners, weights,
                                                  static_cast<double>(episodes.size()),
                                                  net.cfg.max_seq);
    stats.loss = net.loss_and_grad(batch, grads);
    if (!std::isfinite(stats.loss)) throw std::runtime_error("reinforce_step: non-finite loss");
    adam_step(net.params, grads, adam, lr);
    return stats;
}

GradCheckResult grad_check(PolicyNetD& net, const std::function<double()>& loss_fn,
                           const NetParamsT<double>& analytic, double eps, double subsample,
                           uint64_t seed) {
    GradCheckResult res;
    Rng rng(seed);
    std::vector<std::pair<double*, long>> pspans;
    net.params.for_each([&](const char*, double* p, long n) { pspans.emplace_back(p, n); });
    std::vector<std::pair<const double*, long>> gspans;
    analytic.for_each([&](const char*, const double* g, long n) { gspans.emplace_back(g, n); });

    for (size_t k = 0; k < pspans.size(); ++k) {
        auto [p, n] = pspans[k];
        const double* g = gspans[k].first;
        for (long i = 0; i < n; ++i) {
            if (uniform01(rng) > subsample) continue;
            double saved = p[i];
            p[i] = saved + eps;
            double fp = loss_fn();
            p[i] = saved - eps;
            double fm = loss_fn();
            p[i] = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            double denom = std::max({std::abs(numeric), std::abs(g[i]), 1e-6});
            res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - g[i]) / denom);
            ++res.n_checked;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// model container

namespace {

constexpr char kMagic[8] = {'T', 'M', 'D', 'P', 'N', 'E', 'T', '1'};

void write_u64(std::ostream& out, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw std::runtime_error("model file truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

nlohmann::json config_json(const PolicyNetConfig& c) {
    return {{"vocab", c.vocab},   {"n_actions", c.n_actions}, {"width", c.width},
            {"blocks", c.blocks}, {"heads", c.heads},         {"ffn", c.ffn},
            {"max_seq", c.max_seq}};
}

PolicyNetConfig config_from_json(const nlohmann::json& j) {
    PolicyNetConfig c;
    c.vocab = j.at("vocab").get<int>();
    c.n_actions = j.at("n_actions").get<int>();
    c.width = j.at("width").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn = j.at("ffn").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    return c;
}

}  // namespace

void save_model(const PolicyNet& net, const AdamState* adam, const std::string& path,
                const std::string& seed_lineage_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(kMagic, 8);
    nlohmann::json meta;
    meta["config"] = config_json(net.cfg);
    meta["vocab_version"] = TokenVocab::kVersion;
    meta["seed_lineage"] = nlohmann::json::parse(seed_lineage_json);
    meta["param_count"] = net.n_params();
    meta["dtype"] = "f32";
    meta["adam_present"] = adam != nullptr;
    std::string mstr = meta.dump();
    write_u64(out, mstr.size());
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    net.params.for_each([&](const char*, const float* p, long n) {
        out.write(reinterpret_cast<const char*>(p), n * static_cast<long>(sizeof(float)));
    });
    if (adam) {
        write_u64(out, static_cast<uint64_t>(adam->step));
        out.write(reinterpret_cast<const char*>(adam->m.data()),
                  static_cast<std::streamsize>(adam->m.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(adam->v.data()),
                  static_cast<std::streamsize>(adam->v.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

LoadedModel load_model(const std::string& path, const PolicyNetConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a TMDPNET1 model container: " + path);
    uint64_t mlen = read_u64(in);
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw std::runtime_error("model file truncated in metadata");
    nlohmann::json meta = nlohmann::json::parse(mstr);
    if (meta.at("vocab_version").get<std::string>() != TokenVocab::kVersion)
        throw std::runtime_error("vocab_version mismatch in " + path);

    LoadedModel lm;
    lm.net.cfg = config_from_json(meta.at("config"));
    if (expected) {
        nlohmann::json a = config_json(*expected), b = config_json(lm.net.cfg);
        for (auto it = a.begin(); it != a.end(); ++it)
            if (b.at(it.key()) != it.value())
                throw std::runtime_error("model config mismatch on field '" + it.key() + "'");
    }
    lm.net.params.allocate(lm.net.cfg);
    lm.net.params.for_each([&](const char* name, float* p, long n) {
        in.read(reinterpret_cast<char*>(p), n * static_cast<long>(sizeof(float)));
        if (!in) throw std::runtime_error(std::string("model file truncated in block ") + name);
    });
    if (meta.value("adam_present", false)) {
        AdamState st = AdamState::init(lm.net.n_params());
        st.step = static_cast<long>(read_u64(in));
        in.read(reinterpret_cast<char*>(st.m.data()),
                static_cast<std::streamsize>(st.m.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(st.v.data()),
                static_cast<std::streamsize>(st.v.size() * sizeof(double)));
        if (!in) throw std::runtime_error("model file truncated in optimizer state");
        lm.adam = std::move(st);
    }
    lm.meta_json = mstr;
    return lm;
}

// ---------------------------------------------------------------------------
// explicit instantiations

template struct NetParamsT<float>;
template struct NetParamsT<double>;
template struct PolicyNetT<float>;
template struct PolicyNetT<double>;
template void adam_step<float>(NetParamsT<float>&, const NetParamsT<float>&, AdamState&, double);
template void adam_step<double>(NetParamsT<double>&, const NetParamsT<double>&, AdamState&, double);
template void mask_thought<float>(float*, int);
template void mask_thought<double>(double*, int);
template double bc_step<float>(PolicyNetT<float>&, AdamState&, const TrainBatchT<float>&, double);
template double bc_step<double>(PolicyNetT<double>&, AdamState&, const TrainBatchT<double>&, double);
template ReinforceStats reinforce_step<float>(PolicyNetT<float>&, AdamState&,
                                              const std::vector<EpisodeRecord>&, double);
template ReinforceStats reinforce_step<double>(PolicyNetT<double>&, AdamState&,
                                               const std::vector<EpisodeRecord>&, double);
template TrainBatchT<float> batch_from_episodes<float>(const std::vector<const EpisodeRecord*>&,
                                                       const std::vector<double>&, double, int);
template TrainBatchT<double> batch_from_episodes<double>(const std::vector<const EpisodeRecord*>&,
                                                         const std::vector<double>&, double, int);

}  // namespace tmdp
