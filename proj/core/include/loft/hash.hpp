#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace loft {

// FNV-1a, 64-bit. Used wherever two replicas or two runs must agree on a
// digest of numeric state; inputs are hashed by exact bit pattern, so equal
// hashes mean bitwise-equal values (0.0 and -0.0 hash differently).
class Fnv1a64 {
public:
    static constexpr uint64_t kOffset = 0xcbf29ce484222325ull;
    static constexpr uint64_t kPrime = 0x100000001b3ull;

    uint64_t value() const { return h_; }

    void update(const void* data, size_t n) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        uint64_t h = h_;
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= kPrime;
        }
        h_ = h;
    }

    void update_u64(uint64_t v) {
        uint8_t buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
        update(buf, 8);
    }

    void update_f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        update_u64(bits);
    }

    void update_span(std::span<const double> xs) {
        for (double x : xs) update_f64(x);
    }

    void update_str(const std::string& s) {
        update_u64(s.size());
        update(s.data(), s.size());
    }

private:
    uint64_t h_ = kOffset;
};

inline uint64_t hash_bytes(const void* data, size_t n) {
    Fnv1a64 h;
    h.update(data, n);
    return h.value();
}

inline uint64_t hash_doubles(std::span<const double> xs) {
    Fnv1a64 h;
    h.update_span(xs);
    return h.value();
}

}  // namespace loft
