#include "loft/rng.hpp"

#include <cmath>

namespace loft {

namespace {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

uint64_t derive_seed(uint64_t base, uint64_t tag) {
    uint64_t s = base;
    uint64_t a = splitmix64(s);
    s ^= tag * 0xD1B54A32D192ED03ull;
    uint64_t b = splitmix64(s);
    return a ^ rotl(b, 23);
}

Rng::Rng(uint64_t seed) : seed_(seed) {
    uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1p-53;
}

double Rng::next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
}

double Rng::next_gaussian() {
    if (has_cached_gauss_) {
        has_cached_gauss_ = false;
        return cached_gauss_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_gauss_ = r * std::sin(theta);
    has_cached_gauss_ = true;
    return r * std::cos(theta);
}

double Rng::next_gaussian(double mean, double stddev) {
    return mean + stddev * next_gaussian();
}

uint64_t Rng::next_below(uint64_t n) {
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n + 1) % n;
    uint64_t x = next_u64();
    while (x > limit) {
        x = next_u64();
    }
    return x % n;
}

Rng Rng::fork(uint64_t tag) const {
    return Rng(derive_seed(seed_, tag));
}

}  // namespace loft
