#pragma once

#include <vector>

#include "thoughtmdp/net.hpp"

namespace tmdp {

// Incremental forward for many episodes advancing in lockstep. Each slot
// holds one sequence; feeding a token appends to that slot's per-block K/V
// caches and produces the action logits at the new position. Projections and
// feed-forward matmuls are batched across the fed slots, attention runs
// per slot over its cache. All slots fed in one call must sit at the same
// sequence length (episodes started together stay aligned until they end).
class BatchSampler {
public:
    BatchSampler(const PolicyNet& net, int n_slots);

    void reset(int slot);
    int length(int slot) const { return len_[slot]; }

    // feeds tokens[i] to slots[i]; logits become available per slot
    void feed(const std::vector<int>& slots, const std::vector<int>& tokens);

    // action logits at the slot's last fed position (n_actions entries)
    const float* logits(int slot) const;

private:
    const PolicyNet* net_;
    int n_slots_;
    std::vector<int> len_;
    // caches[l] holds K over rows [0, d) and V over rows [d, 2d), one matrix
    // per (block, slot), columns are sequence positions
    std::vector<std::vector<Eigen::MatrixXf>> caches_;
    Eigen::MatrixXf logits_;  // n_actions x n_slots, refreshed per feed
    // scratch
    Eigen::MatrixXf x_, a_, qkv_, attn_, h_, g_;
};

}  // namespace tmdp
