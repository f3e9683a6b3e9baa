#pragma once

#include <cstdint>
#include <random>

namespace tmdp {

// splitmix64; used to derive disjoint seed streams from a master seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic child seed for stream `a` (and optional sub-streams b, c).
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = splitmix64(master ^ splitmix64(a));
    s = splitmix64(s ^ splitmix64(b));
    return splitmix64(s ^ splitmix64(c));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

inline double uniform01(Rng& rng) {
    // 53-bit mantissa draw in [0, 1)
    return (rng() >> 11) * 0x1.0p-53;
}

// uniform integer in [0, n)
inline int uniform_int(Rng& rng, int n) {
    return static_cast<int>(rng() % static_cast<uint64_t>(n));
}

// standard normal via Box-Muller (no cached spare; two draws per call)
inline double normal01(Rng& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace tmdp
