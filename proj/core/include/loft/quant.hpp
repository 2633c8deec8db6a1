#pragma once

#include <cstdint>
#include <vector>

#include "loft/serial.hpp"
#include "loft/tensor.hpp"

namespace loft {

enum class CodebookId : uint8_t { int_absmax = 0, nf4 = 1 };

const char* codebook_name(CodebookId id);

struct QuantConfig {
    int bits = 8;             // 4 or 8
    int64_t block_size = 64;  // elements per scale
    CodebookId codebook = CodebookId::int_absmax;

    void validate() const;  // 8-bit is int_absmax only; ConfigError otherwise
    bool operator==(const QuantConfig&) const = default;
};

// levels[packed_code] = representative value in [-1, 1]. For int_absmax the
// packed code is the two's-complement bit pattern of the signed code, and the
// most negative pattern is unused (level set to the most negative used level
// so corrupt streams stay in range).
struct Codebook {
    std::vector<double> levels;
};

Codebook codebook_for(const QuantConfig& cfg);
// The 16 nf4 levels in ascending order: standard-normal quantiles normalized
// to [-1, 1] with an exact zero at index 7.
Codebook nf4_codebook();

// Block-quantized frozen weight payload. codes is a packed little-endian
// bitstream: element i occupies bits [i*bits, (i+1)*bits). scales hold one
// value per block; every scale is exactly representable in BF16, which makes
// quantize(dequantize(q)) reproduce q identically.
struct QuantizedTensor {
    std::vector<int64_t> shape;
    std::vector<uint8_t> codes;
    std::vector<float> scales;
    QuantConfig config;

    int64_t numel() const;
    bool operator==(const QuantizedTensor&) const = default;
};

// Per block of cfg.block_size elements (row-major, last block may be short):
// scale = max |v| rounded to BF16, each value maps to the codebook level
// nearest v/scale with ties toward the larger-magnitude level; an all-zero
// block gets scale 0 and the zero level.
QuantizedTensor quantize(const Tensor& t, const QuantConfig& cfg);

// value = round_bf16(scale * level). Exact inverse on codebook points.
Tensor dequantize(const QuantizedTensor& q);

// Code bytes plus 4 bytes per block scale.
int64_t packed_bytes(const QuantizedTensor& q);

// Signed codes for int_absmax, level indexes for nf4 (test/debug view).
std::vector<int> semantic_codes(const QuantizedTensor& q);

// Raw bitstream packing; values must fit in `bits` bits.
std::vector<uint8_t> pack_codes(const std::vector<uint32_t>& codes, int bits);
std::vector<uint32_t> unpack_codes(const std::vector<uint8_t>& bytes, int64_t n,
                                   int bits);

// Checkpoint wire form of one quantized payload.
void append_quantized(std::vector<uint8_t>& out, const QuantizedTensor& q);
QuantizedTensor read_quantized(ByteReader& in);

uint64_t hash_quantized(const QuantizedTensor& q);

}  // namespace loft
