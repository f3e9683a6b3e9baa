#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "thoughtmdp/harness.hpp"
#include "thoughtmdp/net.hpp"
#include "thoughtmdp/sampler.hpp"

using namespace tmdp;

TEST_SUITE_BEGIN("net");

namespace {

PolicyNetConfig tiny_config() {
    PolicyNetConfig cfg;
    cfg.width = 8;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.ffn = 16;
    cfg.max_seq = 64;
    return cfg;
}

EpisodeRecord scripted_episode(char cue, GridPos start, const std::vector<GridAction>& actions) {
    EpisodeRecord ep;
    ep.cue = cue;
    GridPos pos = start;
    for (GridAction a : actions) {
        ep.steps.push_back({pos, a});
        pos = grid_step(pos, a);
    }
    ep.length = static_cast<int>(ep.steps.size());
    ep.success = success_task_c(ep);
    ep.reward = ep.success ? 1 : 0;
    return ep;
}

std::vector<EpisodeRecord> fixture_episodes() {
    return {
        scripted_episode('A', {2, 2}, {GridAction::A, GridAction::Down, GridAction::Right,
                                       GridAction::Down, GridAction::Right}),
        scripted_episode('B', {1, 3}, {GridAction::Up, GridAction::Left, GridAction::B,
                                       GridAction::Left}),
        scripted_episode('C', {2, 2}, {GridAction::Down, GridAction::Down, GridAction::Right,
                                       GridAction::Right, GridAction::B, GridAction::Up,
                                       GridAction::Up, GridAction::Up, GridAction::Up,
                                       GridAction::Left, GridAction::Left, GridAction::Left,
                                       GridAction::Left}),
    };
}

template <typename S>
TrainBatchT<S> fixture_bc_batch() {
    auto eps = fixture_episodes();
    std::vector<const EpisodeRecord*> ptrs;
    int labeled = 0;
    for (const auto& e : eps) {
        ptrs.push_back(&e);
        labeled += e.length;
    }
    std::vector<double> w(ptrs.size(), 1.0);
    return batch_from_episodes<S>(ptrs, w, labeled, 64);
}

}  // namespace

TEST_CASE("vocabulary is dense, fixed, and 36 tokens wide") {
    CHECK(TokenVocab::kSize == 36);
    CHECK(TokenVocab::kBegin == 0);
    CHECK(TokenVocab::cue_token('A') == 1);
    CHECK(TokenVocab::cue_token('C') == 3);
    CHECK(TokenVocab::action_token(GridAction::Up) == 4);
    CHECK(TokenVocab::action_token(GridAction::C) == 10);
    CHECK(TokenVocab::pos_token({0, 0}) == 11);
    CHECK(TokenVocab::pos_token({4, 4}) == 35);
}

TEST_CASE("history encoding: layout and token count 2t + 3") {
    std::vector<int> t0 = encode_history('C', {}, {2, 2});
    CHECK(t0 == std::vector<int>{0, 3, TokenVocab::pos_token({2, 2})});

    // after one special action the position repeats
    std::vector<EpisodeStep> steps = {{{2, 2}, GridAction::A}};
    std::vector<int> t1 = encode_history('C', steps, {2, 2});
    CHECK(t1 == std::vector<int>{0, 3, TokenVocab::pos_token({2, 2}),
                                 TokenVocab::action_token(GridAction::A),
                                 TokenVocab::pos_token({2, 2})});
    for (int n = 0; n < 5; ++n) {
        std::vector<EpisodeStep> s(n, {{1, 1}, GridAction::A});
        CHECK(encode_history('A', s, {1, 1}).size() == 2 * n + 3);
    }
    // overflow past the maximum sequence length is an error
    std::vector<EpisodeStep> big(40, {{1, 1}, GridAction::A});
    CHECK_THROWS_AS(encode_history('A', big, {1, 1}, 64), std::length_error);
}

TEST_CASE("forward is strictly causal: suffix permutations leave prefix logits unchanged") {
    PolicyNet net = PolicyNet::init(tiny_config(), 7);
    EpisodeRecord ep = fixture_episodes()[2];
    EncodedEpisode enc = encode_episode(ep);
    auto logits = net.forward_all(enc.tokens);

    for (size_t cut = 1; cut + 1 < enc.tokens.size(); cut += 2) {
        std::vector<int> mutated = enc.tokens;
        for (size_t j = cut + 1; j < mutated.size(); ++j)
            mutated[j] = (mutated[j] + 7 + j) % TokenVocab::kSize;
        auto logits2 = net.forward_all(mutated);
        for (size_t j = 0; j <= cut; ++j)
            for (int k = 0; k < net.cfg.n_actions; ++k)
                CHECK(logits(k, j) == logits2(k, j));
    }
}

TEST_CASE("fresh initialization is near-uniform over the 7 actions") {
    // average over 100 seeds of the action distribution at a few positions
    std::vector<int> tokens = encode_history('A', {}, {0, 0});
    double avg[7] = {0};
    const int seeds = 100;
    for (uint64_t seed = 0; seed < seeds; ++seed) {
        PolicyNet net = PolicyNet::init({}, seed);
        std::vector<float> logits = net.forward_last(tokens);
        double mx = *std::max_element(logits.begin(), logits.end());
        double denom = 0;
        double e[7];
        for (int k = 0; k < 7; ++k) {
            e[k] = std::exp(static_cast<double>(logits[k]) - mx);
            denom += e[k];
        }
        for (int k = 0; k < 7; ++k) avg[k] += e[k] / denom / seeds;
    }
    for (int k = 0; k < 7; ++k) CHECK(std::abs(avg[k] - 1.0 / 7) < 0.05);
}

TEST_CASE("softmax over logits sums to one at every position") {
    PolicyNet net = PolicyNet::init(tiny_config(), 3);
    EncodedEpisode enc = encode_episode(fixture_episodes()[0]);
    auto logits = net.forward_all(enc.tokens);
    for (long j = 0; j < logits.cols(); ++j) {
        double denom = 0, mx = logits.col(j).maxCoeff();
        for (int k = 0; k < 7; ++k) denom += std::exp(static_cast<double>(logits(k, j)) - mx);
        double total = 0;
        for (int k = 0; k < 7; ++k) total += std::exp(static_cast<double>(logits(k, j)) - mx) / denom;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("uniform logits yield cross-entropy ln 7 on a single-example batch") {
    PolicyNetConfig cfg = tiny_config();
    PolicyNetD net = PolicyNetD::init(cfg, 11);
    // zero the head so logits are identically zero -> exact uniform
    net.params.whead.setZero();
    net.params.bhead.setZero();
    auto ep = scripted_episode('A', {2, 2}, {GridAction::Down});
    std::vector<const EpisodeRecord*> ptrs{&ep};
    TrainBatchT<double> batch = batch_from_episodes<double>(ptrs, {1.0}, 1.0, 64);
    CHECK(net.compute_loss(batch) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("mask_thought: exponential suppression and argmax idempotence") {
    float logits[7] = {0, 0, 0, 0, 0, 0, 0};
    mask_thought(logits);
    double denom = 0;
    for (int k = 0; k < 7; ++k) denom += std::exp(static_cast<double>(logits[k]));
    double p_special = (std::exp(static_cast<double>(logits[4])) +
                        std::exp(static_cast<double>(logits[5])) +
                        std::exp(static_cast<double>(logits[6]))) /
                       denom;
    CHECK(p_special < 1e-300);
    for (int k = 0; k < 4; ++k) CHECK(logits[k] == 0.0f);

    float twice[7] = {1, 2, 3, 4, 5, 6, 7};
    float once[7] = {1, 2, 3, 4, 5, 6, 7};
    mask_thought(once);
    mask_thought(twice);
    mask_thought(twice);
    int arg1 = static_cast<int>(std::max_element(once, once + 7) - once);
    int arg2 = static_cast<int>(std::max_element(twice, twice + 7) - twice);
    CHECK(arg1 == arg2);
    CHECK(arg1 == 3);
}

TEST_CASE("masked sampling never returns a special action") {
    PolicyNet net = PolicyNet::init(tiny_config(), 21);
    RolloutBatchSpec spec;
    spec.cue = 'C';
    spec.cap = 25;
    spec.mask = MaskMode::All;
    spec.episode_seeds.resize(2000);
    for (size_t i = 0; i < spec.episode_seeds.size(); ++i)
        spec.episode_seeds[i] = derive_seed(5150, i);
    std::vector<EpisodeRecord> eps = sample_episodes(net, spec);
    long draws = 0;
    for (const auto& e : eps)
        for (const auto& st : e.steps) {
            ++draws;
            CHECK(!is_special(st.action));
        }
    CHECK(draws >= 40000);
}

TEST_CASE("BC gradients match central finite differences on a tiny net") {
    PolicyNetD net = PolicyNetD::init(tiny_config(), 42);
    TrainBatchT<double> batch = fixture_bc_batch<double>();
    NetParamsT<double> grads;
    grads.allocate(net.cfg);
    net.loss_and_grad(batch, grads);
    GradCheckResult res = grad_check(
        net, [&]() { return net.compute_loss(batch); }, grads, 1e-4, 0.05, 7);
    CHECK(res.n_checked > 50);
    CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("REINFORCE loss gradients match central finite differences") {
    PolicyNetD net = PolicyNetD::init(tiny_config(), 43);
    auto eps = fixture_episodes();
    // use the replay-success flags as returns; ensure at least one winner
    std::vector<const EpisodeRecord*> winners;
    std::vector<double> weights;
    for (auto& e : eps)
        if (e.reward != 0) {
            winners.push_back(&e);
            weights.push_back(1.0);
        }
    REQUIRE(!winners.empty());
    TrainBatchT<double> batch =
        batch_from_episodes<double>(winners, weights, static_cast<double>(eps.size()), 64);
    NetParamsT<double> grads;
    grads.allocate(net.cfg);
    net.loss_and_grad(batch, grads);
    GradCheckResult res = grad_check(
        net, [&]() { return net.compute_loss(batch); }, grads, 1e-4, 0.05, 8);
    CHECK(res.n_checked > 50);
    CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("halving epsilon keeps the finite-difference error at or below the same level") {
    PolicyNetD net = PolicyNetD::init(tiny_config(), 44);
    TrainBatchT<double> batch = fixture_bc_batch<double>();
    NetParamsT<double> grads;
    grads.allocate(net.cfg);
    net.loss_and_grad(batch, grads);
    GradCheckResult coarse = grad_check(
        net, [&]() { return net.compute_loss(batch); }, grads, 2e-4, 0.03, 9);
    GradCheckResult fine = grad_check(
        net, [&]() { return net.compute_loss(batch); }, grads, 1e-4, 0.03, 9);
    CHECK(fine.max_rel_error < std::max(coarse.max_rel_error * 1.5, 1e-6));
}

TEST_CASE("constant loss reports zero error against a zero gradient") {
    PolicyNetD net = PolicyNetD::init(tiny_config(), 45);
    NetParamsT<double> zero;
    zero.allocate(net.cfg);
    zero.set_zero();
    GradCheckResult res = grad_check(net, []() { return 3.25; }, zero, 1e-4, 0.05, 10);
    CHECK(res.max_rel_error == 0.0);
}

TEST_CASE("float and double instantiations agree to float precision") {
    PolicyNetConfig cfg = tiny_config();
    PolicyNet netf = PolicyNet::init(cfg, 77);
    PolicyNetD netd;
    netd.cfg = cfg;
    netd.params.allocate(cfg);
    // copy float params into the double net
    std::vector<std::pair<double*, long>> dst;
    netd.params.for_each([&](const char*, double* p, long n) { dst.emplace_back(p, n); });
    size_t k = 0;
    netf.params.for_each([&](const char*, const float* p, long n) {
        for (long i = 0; i < n; ++i) dst[k].first[i] = static_cast<double>(p[i]);
        ++k;
    });
    EncodedEpisode enc = encode_episode(fixture_episodes()[2]);
    auto lf = netf.forward_all(enc.tokens);
    auto ld = netd.forward_all(enc.tokens);
    for (long j = 0; j < lf.cols(); ++j)
        for (int a = 0; a < cfg.n_actions; ++a)
            CHECK(std::abs(static_cast<double>(lf(a, j)) - ld(a, j)) < 2e-4);
}

TEST_CASE("adam: zero gradients leave parameters unchanged for any state") {
    PolicyNet net = PolicyNet::init(tiny_config(), 50);
    AdamState adam = AdamState::init(net.n_params());
    // build some nonzero moment history first
    TrainBatch batch = fixture_bc_batch<float>();
    bc_step(net, adam, batch, 1e-4);
    bc_step(net, adam, batch, 1e-4);
    std::vector<float> before;
    net.params.for_each([&](const char*, const float* p, long n) {
        before.insert(before.end(), p, p + n);
    });
    long step_before = adam.step;

    NetParamsT<float> zero;
    zero.allocate(net.cfg);
    zero.set_zero();
    adam_step(net.params, zero, adam, 1e-4);
    CHECK(adam.step == step_before + 1);
    std::vector<float> after;
    net.params.for_each([&](const char*, const float* p, long n) {
        after.insert(after.end(), p, p + n);
    });
    CHECK(before == after);
}

TEST_CASE("reinforce: all-zero returns change nothing but the step counter") {
    PolicyNet net = PolicyNet::init(tiny_config(), 51);
    AdamState adam = AdamState::init(net.n_params());
    auto ep = scripted_episode('C', {2, 2}, {GridAction::Up, GridAction::Up});
    REQUIRE(ep.reward == 0);
    std::vector<float> before;
    net.params.for_each([&](const char*, const float* p, long n) {
        before.insert(before.end(), p, p + n);
    });
    ReinforceStats stats = reinforce_step(net, adam, {ep, ep, ep}, 1e-5);
    CHECK(stats.mean_return == 0.0);
    CHECK(adam.step == 1);
    std::vector<float> after;
    net.params.for_each([&](const char*, const float* p, long n) {
        after.insert(after.end(), p, p + n);
    });
    CHECK(before == after);
}

TEST_CASE("duplicating an episode leaves the normalized gradient direction intact") {
    // gradient of [e, e] with N=2 equals gradient of [e] with N=1
    PolicyNetD net = PolicyNetD::init(tiny_config(), 52);
    auto e = fixture_episodes()[2];
    REQUIRE(e.reward == 1);
    std::vector<const EpisodeRecord*> one{&e}, two{&e, &e};
    TrainBatchT<double> b1 = batch_from_episodes<double>(one, {1.0}, 1.0, 64);
    TrainBatchT<double> b2 = batch_from_episodes<double>(two, {1.0, 1.0}, 2.0, 64);
    NetParamsT<double> g1, g2;
    g1.allocate(net.cfg);
    g2.allocate(net.cfg);
    net.loss_and_grad(b1, g1);
    net.loss_and_grad(b2, g2);
    std::vector<double> v1, v2;
    g1.for_each([&](const char*, const double* p, long n) { v1.insert(v1.end(), p, p + n); });
    g2.for_each([&](const char*, const double* p, long n) { v2.insert(v2.end(), p, p + n); });
    REQUIRE(v1.size() == v2.size());
    for (size_t i = 0; i < v1.size(); ++i) CHECK(v1[i] == doctest::Approx(v2[i]).epsilon(1e-9));
}

TEST_CASE("non-replayable histories are rejected") {
    PolicyNet net = PolicyNet::init(tiny_config(), 53);
    AdamState adam = AdamState::init(net.n_params());
    EpisodeRecord ep = scripted_episode('C', {2, 2}, {GridAction::Down, GridAction::Down});
    ep.steps[1].pos = {0, 0};  // breaks replay
    CHECK_THROWS_AS(reinforce_step(net, adam, {ep}, 1e-5), std::invalid_argument);
}

TEST_CASE("model container round trip is bit-exact; corruption and mismatch are rejected") {
    namespace fs = std::filesystem;
    std::string path = (fs::temp_directory_path() / "tmdp_net_test.tmdpnet").string();
    PolicyNet net = PolicyNet::init(tiny_config(), 60);
    AdamState adam = AdamState::init(net.n_params());
    TrainBatch batch = fixture_bc_batch<float>();
    bc_step(net, adam, batch, 1e-4);
    save_model(net, &adam, path, R"({"seed":60})");

    LoadedModel lm = load_model(path);
    REQUIRE(lm.adam.has_value());
    CHECK(lm.adam->step == adam.step);
    CHECK(lm.adam->m == adam.m);
    CHECK(lm.adam->v == adam.v);

    EncodedEpisode enc = encode_episode(fixture_episodes()[1]);
    auto a = net.forward_all(enc.tokens);
    auto b = lm.net.forward_all(enc.tokens);
    REQUIRE(a.size() == b.size());
    for (long i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);

    SUBCASE("corrupted magic is rejected") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXXXXXX", 8);
        f.close();
        CHECK_THROWS(load_model(path));
    }
    SUBCASE("truncation is rejected") {
        fs::resize_file(path, fs::file_size(path) / 2);
        CHECK_THROWS(load_model(path));
    }
    SUBCASE("config mismatch is rejected naming the field") {
        PolicyNetConfig other = tiny_config();
        other.width = 16;
        try {
            load_model(path, &other);
            CHECK(false);
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("width") != std::string::npos);
        }
    }
}

TEST_CASE("incremental sampler matches the training-mode forward") {
    PolicyNet net = PolicyNet::init({}, 61);
    EpisodeRecord ep = fixture_episodes()[2];
    // feed [begin, cue, pos0, act0, ..., pos_t] and compare logits at each pos_t
    BatchSampler sampler(net, 1);
    std::vector<int> hist;
    for (size_t t = 0; t <= ep.steps.size(); ++t) {
        std::vector<EpisodeStep> sofar(ep.steps.begin(), ep.steps.begin() + t);
        GridPos cur = t < ep.steps.size() ? ep.steps[t].pos
                                          : grid_step(ep.steps.back().pos, ep.steps.back().action);
        std::vector<int> tokens = encode_history(ep.cue, sofar, cur);
        std::vector<float> full = net.forward_last(tokens);
        while (hist.size() < tokens.size()) {
            int next_tok = tokens[hist.size()];
            sampler.feed({0}, {next_tok});
            hist.push_back(next_tok);
        }
        const float* inc = sampler.logits(0);
        for (int k = 0; k < 7; ++k)
            CHECK(std::abs(static_cast<double>(full[k]) - inc[k]) < 5e-4);
    }
}

TEST_CASE("lockstep batched sampling is independent of batch composition") {
    PolicyNet net = PolicyNet::init({}, 62);
    RolloutBatchSpec spec;
    spec.cue = 'C';
    spec.cap = 15;
    spec.episode_seeds = {derive_seed(9, 0), derive_seed(9, 1), derive_seed(9, 2)};
    std::vector<EpisodeRecord> batch3 = sample_episodes(net, spec);
    for (int i = 0; i < 3; ++i) {
        RolloutBatchSpec solo = spec;
        solo.episode_seeds = {derive_seed(9, static_cast<uint64_t>(i))};
        std::vector<EpisodeRecord> one = sample_episodes(net, solo);
        REQUIRE(one.size() == 1);
        REQUIRE(one[0].steps.size() == batch3[i].steps.size());
        for (size_t t = 0; t < one[0].steps.size(); ++t) {
            CHECK(one[0].steps[t].action == batch3[i].steps[t].action);
            CHECK(one[0].steps[t].pos == batch3[i].steps[t].pos);
        }
    }
}

TEST_SUITE_END();
