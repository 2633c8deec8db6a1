#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace loft {

// Deterministic random stream: xoshiro256** seeded through splitmix64.
// The integer path is pure 64-bit arithmetic, so identical seeds produce
// identical streams on every platform. Gaussians come from Box-Muller on
// top of that stream.
class Rng {
public:
    static constexpr std::string_view kAlgorithmId = "xoshiro256ss-splitmix64-v1";

    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1), 53 random bits.
    double next_double();

    // Uniform in (0, 1]; never zero, safe under log().
    double next_double_open();

    // Standard normal, Box-Muller pair (one value cached).
    double next_gaussian();
    double next_gaussian(double mean, double stddev);

    // Uniform integer in [0, n), n >= 1. Rejection-sampled, unbiased.
    uint64_t next_below(uint64_t n);

    // Independent substream keyed by (construction seed, tag). Pure function
    // of those two values, regardless of how much this stream has produced.
    Rng fork(uint64_t tag) const;

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_ = 0;
    std::array<uint64_t, 4> state_{};
    double cached_gauss_ = 0.0;
    bool has_cached_gauss_ = false;
};

// splitmix64-based mixing, used for substream derivation.
uint64_t derive_seed(uint64_t base, uint64_t tag);

}  // namespace loft
