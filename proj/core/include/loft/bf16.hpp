#pragma once

#include <cstdint>

namespace loft {

// Round a double to the nearest BF16 value (8-bit exponent, 7-bit mantissa,
// ties to even), returned as a double. The rounding is done in one step from
// the double, so no double-rounding artifact can occur. Infinities and NaN
// pass through; magnitudes past the largest finite BF16 round to infinity;
// the BF16 subnormal range is honored down to 2^-133.
double round_bf16_scalar(double x);

// True when x survives round_bf16_scalar unchanged (NaN counts as exact).
bool is_bf16_value(double x);

// Spacing of the BF16 grid at x's magnitude. Used for "within one ulp"
// error bounds.
double bf16_ulp(double x);

// Largest finite BF16 value (0x7F7F).
double bf16_max();

// Serialization form: the upper 16 bits of the FP32 pattern after rounding.
uint16_t bf16_bits_from_double(double x);
double bf16_double_from_bits(uint16_t bits);

// Round a double to the nearest FP32 value, returned as a double.
double round_fp32_scalar(double x);

}  // namespace loft
