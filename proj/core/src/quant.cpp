#include "loft/quant.hpp"

#include <cmath>

#include "loft/bf16.hpp"
#include "loft/errors.hpp"
#include "loft/hash.hpp"

namespace loft {

const char* codebook_name(CodebookId id) {
    switch (id) {
        case CodebookId::int_absmax: return "int_absmax";
        case CodebookId::nf4: return "nf4";
    }
    return "unknown";
}

void QuantConfig::validate() const {
    if (bits != 4 && bits != 8)
        throw ConfigError("quantization bits must be 4 or 8, got " +
                          std::to_string(bits));
    if (block_size <= 0)
        throw ConfigError("block size must be positive, got " +
                          std::to_string(block_size));
    if (bits == 8 && codebook != CodebookId::int_absmax)
        throw ConfigError("8-bit quantization supports int_absmax only");
}

Codebook nf4_codebook() {
    return Codebook{{-1.0, -0.6961928009986877, -0.5250730514526367,
                     -0.39491748809814453, -0.28444138169288635,
                     -0.18477343022823334, -0.09105003625154495, 0.0,
                     0.07958029955625534, 0.16093020141124725,
                     0.24611230194568634, 0.33791524171829224,
                     0.44070982933044434, 0.5626170039176941,
                     0.7229568362236023, 1.0}};
}

Codebook codebook_for(const QuantConfig& cfg) {
    cfg.validate();
    if (cfg.codebook == CodebookId::nf4) return nf4_codebook();
    int64_t level_max = (1 << (cfg.bits - 1)) - 1;  // 127 or 7
    int64_t n = int64_t{1} << cfg.bits;
    Codebook cb;
    cb.levels.resize(static_cast<size_t>(n));
    for (int64_t pattern = 0; pattern < n; ++pattern) {
        int64_t signed_code =
            pattern >= n / 2 ? pattern - n : pattern;  // two's complement
        if (signed_code == -n / 2) signed_code = -level_max;  // unused pattern
        cb.levels[static_cast<size_t>(pattern)] =
            static_cast<double>(signed_code) / static_cast<double>(level_max);
    }
    return cb;
}

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

// Scale must be a BF16 value so a quantize/dequantize cycle is idempotent;
// a nonzero block max must not collapse to scale 0.
double block_scale(double max_abs) {
    if (max_abs == 0.0) return 0.0;
    double s = round_bf16_scalar(max_abs);
    if (s == 0.0) s = 0x1p-133;  // smallest positive BF16
    return s;
}

uint32_t encode_int_absmax(double ratio, int bits) {
    int64_t level_max = (1 << (bits - 1)) - 1;
    double scaled = ratio * static_cast<double>(level_max);
    // std::round gives ties away from zero, matching the codebook rule.
    int64_t code = static_cast<int64_t>(std::llround(scaled));
    if (code > level_max) code = level_max;
    if (code < -level_max) code = -level_max;
    return static_cast<uint32_t>(code) & ((1u << bits) - 1);
}

uint32_t encode_nf4(double ratio, const Codebook& cb) {
    size_t best = 0;
    double best_d = std::abs(ratio - cb.levels[0]);
    for (size_t i = 1; i < cb.levels.size(); ++i) {
        double d = std::abs(ratio - cb.levels[i]);
        if (d < best_d ||
            (d == best_d &&
             std::abs(cb.levels[i]) > std::abs(cb.levels[best]))) {
            best = i;
            best_d = d;
        }
    }
    return static_cast<uint32_t>(best);
}

}  // namespace

int64_t QuantizedTensor::numel() const { return shape_numel(shape); }

QuantizedTensor quantize(const Tensor& t, const QuantConfig& cfg) {
    cfg.validate();
    if (!t.all_finite()) throw DomainError("quantize input has non-finite values");

    const int64_t n = t.numel();
    const int64_t bs = cfg.block_size;
    const int64_t n_blocks = (n + bs - 1) / bs;
    const bool is_nf4 = cfg.codebook == CodebookId::nf4;
    const Codebook cb = is_nf4 ? nf4_codebook() : Codebook{};
    const uint32_t zero_code = is_nf4 ? 7u : 0u;

    std::vector<float> scales(static_cast<size_t>(n_blocks));
    std::vector<uint32_t> flat(static_cast<size_t>(n));
    for (int64_t b = 0; b < n_blocks; ++b) {
        int64_t lo = b * bs;
        int64_t hi = std::min(n, lo + bs);
        double max_abs = 0.0;
        for (int64_t i = lo; i < hi; ++i)
            max_abs = std::max(max_abs, std::abs(t[i]));
        double s = block_scale(max_abs);
        scales[static_cast<size_t>(b)] = static_cast<float>(s);
        if (s == 0.0) {
            for (int64_t i = lo; i < hi; ++i)
                flat[static_cast<size_t>(i)] = zero_code;
            continue;
        }
        for (int64_t i = lo; i < hi; ++i) {
            double ratio = t[i] / s;
            flat[static_cast<size_t>(i)] =
                is_nf4 ? encode_nf4(ratio, cb) : encode_int_absmax(ratio, cfg.bits);
        }
    }

    QuantizedTensor q;
    q.shape = t.shape();
    q.codes = pack_codes(flat, cfg.bits);
    q.scales = std::move(scales);
    q.config = cfg;
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    q.config.validate();
    const int64_t n = q.numel();
    const int64_t bs = q.config.block_size;
    const int64_t n_blocks = (n + bs - 1) / bs;
    const int64_t expect_bytes = (n * q.config.bits + 7) / 8;
    if (static_cast<int64_t>(q.codes.size()) != expect_bytes)
        throw FormatError("packed code stream is " +
                          std::to_string(q.codes.size()) + " bytes, expected " +
                          std::to_string(expect_bytes));
    if (static_cast<int64_t>(q.scales.size()) != n_blocks)
        throw FormatError("scale count " + std::to_string(q.scales.size()) +
                          ", expected " + std::to_string(n_blocks));

    const Codebook cb = codebook_for(q.config);
    std::vector<uint32_t> flat = unpack_codes(q.codes, n, q.config.bits);
    Tensor out(q.shape);
    for (int64_t i = 0; i < n; ++i) {
        double s = static_cast<double>(q.scales[static_cast<size_t>(i / bs)]);
        double level = cb.levels[flat[static_cast<size_t>(i)]];
        out[i] = round_bf16_scalar(s * level);
    }
    out.set_precision(Precision::bf16);
    return out;
}

int64_t packed_bytes(const QuantizedTensor& q) {
    return static_cast<int64_t>(q.codes.size()) +
           4 * static_cast<int64_t>(q.scales.size());
}

std::vector<int> semantic_codes(const QuantizedTensor& q) {
    std::vector<uint32_t> flat = unpack_codes(q.codes, q.numel(), q.config.bits);
    std::vector<int> out(flat.size());
    const bool is_nf4 = q.config.codebook == CodebookId::nf4;
    const int64_t half = int64_t{1} << (q.config.bits - 1);
    for (size_t i = 0; i < flat.size(); ++i) {
        int64_t v = flat[i];
        if (!is_nf4 && v >= half) v -= 2 * half;
        out[i] = static_cast<int>(v);
    }
    return out;
}

std::vector<uint8_t> pack_codes(const std::vector<uint32_t>& codes, int bits) {
    if (bits != 4 && bits != 8)
        throw ConfigError("packing supports 4 or 8 bits, got " +
                          std::to_string(bits));
    const uint32_t mask = (1u << bits) - 1;
    std::vector<uint8_t> out((codes.size() * static_cast<size_t>(bits) + 7) / 8,
                             0);
    for (size_t i = 0; i < codes.size(); ++i) {
        uint32_t c = codes[i] & mask;
        size_t bit = i * static_cast<size_t>(bits);
        out[bit / 8] |= static_cast<uint8_t>(c << (bit % 8));
    }
    return out;
}

std::vector<uint32_t> unpack_codes(const std::vector<uint8_t>& bytes, int64_t n,
                                   int bits) {
    if (bits != 4 && bits != 8)
        throw ConfigError("packing supports 4 or 8 bits, got " +
                          std::to_string(bits));
    const int64_t expect = (n * bits + 7) / 8;
    if (static_cast<int64_t>(bytes.size()) < expect)
        throw FormatError("code stream is " + std::to_string(bytes.size()) +
                          " bytes, expected at least " + std::to_string(expect));
    const uint32_t mask = (1u << bits) - 1;
    std::vector<uint32_t> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        size_t bit = static_cast<size_t>(i) * static_cast<size_t>(bits);
        out[static_cast<size_t>(i)] =
            (static_cast<uint32_t>(bytes[bit / 8]) >> (bit % 8)) & mask;
    }
    return out;
}

void append_quantized(std::vector<uint8_t>& out, const QuantizedTensor& q) {
    put_u32(out, static_cast<uint32_t>(q.shape.size()));
    for (int64_t d : q.shape) put_u64(out, static_cast<uint64_t>(d));
    put_u8(out, static_cast<uint8_t>(q.config.bits));
    put_u8(out, static_cast<uint8_t>(q.config.codebook));
    put_u32(out, static_cast<uint32_t>(q.config.block_size));
    put_u64(out, q.scales.size());
    for (float s : q.scales) put_f32(out, s);
    put_u64(out, q.codes.size());
    out.insert(out.end(), q.codes.begin(), q.codes.end());
}

QuantizedTensor read_quantized(ByteReader& in) {
    QuantizedTensor q;
    uint32_t ndim = in.u32();
    if (ndim > 8) throw FormatError("quantized payload rank " + std::to_string(ndim));
    q.shape.resize(ndim);
    for (uint32_t i = 0; i < ndim; ++i)
        q.shape[i] = static_cast<int64_t>(in.u64());
    q.config.bits = in.u8();
    uint8_t cb = in.u8();
    if (cb > 1) throw FormatError("unknown codebook id " + std::to_string(cb));
    q.config.codebook = static_cast<CodebookId>(cb);
    q.config.block_size = in.u32();
    q.config.validate();
    uint64_t n_scales = in.u64();
    q.scales.resize(n_scales);
    for (uint64_t i = 0; i < n_scales; ++i) q.scales[i] = in.f32();
    uint64_t n_code_bytes = in.u64();
    const uint8_t* p = in.bytes(n_code_bytes);
    q.codes.assign(p, p + n_code_bytes);
    // Cross-check sizes against the declared shape before use.
    dequantize(q);
    return q;
}

uint64_t hash_quantized(const QuantizedTensor& q) {
    Fnv1a64 h;
    h.update_u64(q.shape.size());
    for (int64_t d : q.shape) h.update_u64(static_cast<uint64_t>(d));
    h.update_u64(static_cast<uint64_t>(q.config.bits));
    h.update_u64(static_cast<uint64_t>(q.config.codebook));
    h.update_u64(static_cast<uint64_t>(q.config.block_size));
    for (float s : q.scales) {
        uint32_t bits;
        std::memcpy(&bits, &s, 4);
        h.update_u64(bits);
    }
    h.update(q.codes.data(), q.codes.size());
    return h.value();
}

}  // namespace loft
