#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "loft/quant.hpp"
#include "loft/rng.hpp"
#include "loft/tensor.hpp"

namespace loft {

// Trainable low-rank pair. A is r x n_in, B is n_out x r; the adapter's
// contribution to a forward pass is (alpha/r) * B * A * x.
struct LoraAdapter {
    Tensor A;
    Tensor B;
    int64_t r = 0;
    double alpha = 32.0;
    double dropout_p = 0.0;
    std::string name;

    int64_t n_in() const { return A.cols(); }
    int64_t n_out() const { return B.rows(); }
    int64_t param_count() const { return r * (n_in() + n_out()); }
};

// A ~ Gaussian(0, 0.02^2), B = 0, so the adapter delta is exactly zero at
// initialization.
LoraAdapter init_adapter(int64_t n_in, int64_t n_out, int64_t r, double alpha,
                         double dropout_p, Rng& rng, std::string name = {});

// Frozen quantized weight with its attached adapters. The dense transpose of
// the base is cached once; training never touches the base.
struct AdaptedLinear {
    QuantizedTensor base;  // n_out x n_in
    Tensor base_dense_t;   // dequantized, transposed to n_in x n_out
    std::vector<LoraAdapter> adapters;

    int64_t n_in() const { return base.shape[1]; }
    int64_t n_out() const { return base.shape[0]; }
    void refresh_cache() { base_dense_t = transpose(dequantize(base)); }
};

AdaptedLinear make_adapted_linear(const Tensor& w0, const QuantConfig& cfg,
                                  std::vector<LoraAdapter> adapters);

// y = x * dequantize(W0)^T + sum over adapters of (alpha/r) * drop(x) A^T B^T,
// for row-major activations x of shape [rows, n_in]. Dropout applies to the
// adapter input only, in train mode only; rng is required then.
Tensor lora_forward(const AdaptedLinear& lin, const Tensor& x, bool train,
                    Rng* rng = nullptr);

// W0 + (alpha/r) * B * A. Exists as a test oracle for the unmerged path;
// inference never merges.
Tensor merge(const Tensor& w0_dense, const LoraAdapter& adapter);

// Sum of r * (n_in + n_out) over the given projection dims.
int64_t adapter_param_count(
    const std::vector<std::pair<int64_t, int64_t>>& dims, int64_t r);

// ---- serialization (lora_io.cpp) --------------------------------------
// File layout: magic "FLRA", format version u32, entry count u32, then per
// entry n_in/n_out/r as u32, alpha/dropout as f32, name length u32 + UTF-8
// name; after all headers, per entry A then B row-major as BF16 (upper 16
// bits of the FP32 pattern), little-endian. All integers little-endian.

std::vector<uint8_t> serialize_adapters(const std::vector<LoraAdapter>& adapters);
std::vector<LoraAdapter> parse_adapters(const std::vector<uint8_t>& bytes);

void save_adapters(const std::vector<LoraAdapter>& adapters,
                   const std::string& path);
std::vector<LoraAdapter> load_adapters(const std::string& path);

// A/B bytes only (2 per element), excluding the header: the reported
// adapter size.
int64_t adapter_payload_bytes(const std::vector<LoraAdapter>& adapters);

}  // namespace loft
