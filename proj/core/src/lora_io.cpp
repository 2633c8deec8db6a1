#include "loft/bf16.hpp"
#include "loft/errors.hpp"
#include "loft/lora.hpp"
#include "loft/serial.hpp"

namespace loft {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'R', 'A'};
constexpr uint32_t kVersion = 1;

void append_bf16_matrix(std::vector<uint8_t>& out, const Tensor& t) {
    for (int64_t i = 0; i < t.numel(); ++i)
        put_u16(out, bf16_bits_from_double(t[i]));
}

Tensor read_bf16_matrix(ByteReader& in, int64_t rows, int64_t cols) {
    Tensor t({rows, cols});
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = bf16_double_from_bits(in.u16());
    t.set_precision(Precision::bf16);
    return t;
}

}  // namespace

std::vector<uint8_t> serialize_adapters(const std::vector<LoraAdapter>& adapters) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(adapters.size()));
    for (const LoraAdapter& a : adapters) {
        put_u32(out, static_cast<uint32_t>(a.n_in()));
        put_u32(out, static_cast<uint32_t>(a.n_out()));
        put_u32(out, static_cast<uint32_t>(a.r));
        put_f32(out, static_cast<float>(a.alpha));
        put_f32(out, static_cast<float>(a.dropout_p));
        put_u32(out, static_cast<uint32_t>(a.name.size()));
        out.insert(out.end(), a.name.begin(), a.name.end());
    }
    for (const LoraAdapter& a : adapters) {
        append_bf16_matrix(out, a.A);
        append_bf16_matrix(out, a.B);
    }
    return out;
}

std::vector<LoraAdapter> parse_adapters(const std::vector<uint8_t>& bytes) {
    ByteReader in(bytes);
    std::string magic = in.str(4);
    if (magic != std::string(kMagic, 4))
        throw FormatError("bad adapter magic at offset 0");
    uint32_t version = in.u32();
    if (version != kVersion)
        throw FormatError("unsupported adapter format version " +
                          std::to_string(version) + " at offset 4");
    uint32_t n_entries = in.u32();

    struct Header {
        uint32_t n_in, n_out, r;
        float alpha, dropout;
        std::string name;
    };
    std::vector<Header> headers;
    headers.reserve(n_entries);
    for (uint32_t i = 0; i < n_entries; ++i) {
        Header h;
        h.n_in = in.u32();
        h.n_out = in.u32();
        h.r = in.u32();
        h.alpha = in.f32();
        h.dropout = in.f32();
        uint32_t name_len = in.u32();
        h.name = in.str(name_len);
        if (h.r == 0 || h.n_in == 0 || h.n_out == 0 ||
            h.r > std::min(h.n_in, h.n_out))
            throw FormatError("invalid adapter entry " + std::to_string(i) +
                              ": " + std::to_string(h.n_in) + "->" +
                              std::to_string(h.n_out) + " r=" +
                              std::to_string(h.r));
        headers.push_back(std::move(h));
    }

    std::vector<LoraAdapter> out;
    out.reserve(n_entries);
    for (const Header& h : headers) {
        LoraAdapter a;
        a.A = read_bf16_matrix(in, h.r, h.n_in);
        a.B = read_bf16_matrix(in, h.n_out, h.r);
        a.r = h.r;
        a.alpha = h.alpha;
        a.dropout_p = h.dropout;
        a.name = h.name;
        out.push_back(std::move(a));
    }
    if (!in.done())
        throw FormatError("trailing bytes at offset " + std::to_string(in.pos()));
    return out;
}

void save_adapters(const std::vector<LoraAdapter>& adapters,
                   const std::string& path) {
    write_file_bytes(path, serialize_adapters(adapters));
}

std::vector<LoraAdapter> load_adapters(const std::string& path) {
    return parse_adapters(read_file_bytes(path));
}

int64_t adapter_payload_bytes(const std::vector<LoraAdapter>& adapters) {
    int64_t total = 0;
    for (const LoraAdapter& a : adapters) total += 2 * a.param_count();
    return total;
}

}  // namespace loft
