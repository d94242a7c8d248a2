#pragma once

#include <cstdint>

namespace rf {

// Deterministic RNG with a fixed algorithm so that seeded runs are
// bit-reproducible across platforms and standard libraries
// (std::normal_distribution is implementation-defined, so we roll our own
// gaussian on top of splitmix64/xoshiro256**).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Derives an independent stream, e.g. one per scene index.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    // Standard normal via Box-Muller (one spare cached).
    double gaussian();

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rf
