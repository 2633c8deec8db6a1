#include "loft/bf16.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace loft {

namespace {

// Exact round-half-to-even for |v| < 2^52. floor() and the fractional part
// are exact in that range, so no rounding-mode or libm dependence leaks in.
double round_half_even(double v) {
    const double f = std::floor(v);
    const double frac = v - f;
    if (frac > 0.5) return f + 1.0;
    if (frac < 0.5) return f;
    return (std::fmod(f, 2.0) == 0.0) ? f : f + 1.0;
}

}  // namespace

double bf16_max() {
    // mantissa 255/128, exponent 127
    return 255.0 * 0x1p120;
}

double round_bf16_scalar(double x) {
    if (std::isnan(x) || std::isinf(x)) {
        return x;
    }
    if (x == 0.0) {
        return x;  // preserves the sign of zero
    }
    int exp = 0;
    std::frexp(x, &exp);  // |x| = m * 2^exp with m in [0.5, 1)
    // Normal BF16 carries 8 significant bits, so the grid spacing at this
    // magnitude is 2^(exp-8). Below 2^-126 the grid is the fixed subnormal
    // quantum 2^-133.
    int quantum_exp = exp - 8;
    if (exp - 1 < -126) {
        quantum_exp = -133;
    }
    const double scaled = std::ldexp(x, -quantum_exp);
    const double rounded = round_half_even(scaled);
    double result = std::ldexp(rounded, quantum_exp);
    if (result == 0.0) {
        return std::copysign(0.0, x);
    }
    const double max = bf16_max();
    if (result > max) return std::numeric_limits<double>::infinity();
    if (result < -max) return -std::numeric_limits<double>::infinity();
    return result;
}

bool is_bf16_value(double x) {
    if (std::isnan(x)) return true;
    return round_bf16_scalar(x) == x;
}

double bf16_ulp(double x) {
    if (std::isnan(x) || std::isinf(x)) return std::numeric_limits<double>::quiet_NaN();
    if (x == 0.0) return 0x1p-133;
    int exp = 0;
    std::frexp(x, &exp);
    if (exp - 1 < -126) return 0x1p-133;
    return std::ldexp(1.0, exp - 8);
}

uint16_t bf16_bits_from_double(double x) {
    const float f = static_cast<float>(round_bf16_scalar(x));
    uint32_t u = 0;
    std::memcpy(&u, &f, sizeof(u));
    return static_cast<uint16_t>(u >> 16);
}

double bf16_double_from_bits(uint16_t bits) {
    const uint32_t u = static_cast<uint32_t>(bits) << 16;
    float f = 0.0f;
    std::memcpy(&f, &u, sizeof(f));
    return static_cast<double>(f);
}

double round_fp32_scalar(double x) {
    return static_cast<double>(static_cast<float>(x));
}

}  // namespace loft
