#include "loft/errors.hpp"
#include "loft/model.hpp"
#include "loft/serial.hpp"

namespace loft {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void append_string(std::vector<uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

}  // namespace

std::vector<uint8_t> serialize_model(const ToyModel& m) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);

    put_u32(out, static_cast<uint32_t>(m.arch.n_layers));
    put_u32(out, static_cast<uint32_t>(m.arch.d_model));
    put_u32(out, static_cast<uint32_t>(m.arch.d_kv));
    put_u32(out, static_cast<uint32_t>(m.arch.n_heads));
    put_u32(out, static_cast<uint32_t>(m.arch.vocab_size));
    put_u32(out, static_cast<uint32_t>(m.arch.max_seq));
    append_string(out, m.arch.preset_id);

    put_u32(out, static_cast<uint32_t>(m.r));
    put_f64(out, m.alpha);
    put_f64(out, m.dropout_p);
    put_u64(out, m.seed);
    put_u8(out, static_cast<uint8_t>(m.quant.bits));
    put_u8(out, static_cast<uint8_t>(m.quant.codebook));
    put_u32(out, static_cast<uint32_t>(m.quant.block_size));

    append_quantized(out, m.embed_q);
    append_quantized(out, m.pos_q);
    append_quantized(out, m.norm_final_q);
    append_quantized(out, m.head_q);
    for (const LayerWeights& lw : m.layers) {
        append_quantized(out, lw.q.base);
        append_quantized(out, lw.k.base);
        append_quantized(out, lw.v.base);
        append_quantized(out, lw.wo_q);
        append_quantized(out, lw.w1_q);
        append_quantized(out, lw.w2_q);
        append_quantized(out, lw.norm_attn_q);
        append_quantized(out, lw.norm_mlp_q);
    }

    std::vector<uint8_t> adapters = serialize_adapters(m.collect_adapters());
    put_u64(out, adapters.size());
    out.insert(out.end(), adapters.begin(), adapters.end());
    return out;
}

ToyModel parse_model(const std::vector<uint8_t>& bytes) {
    ByteReader in(bytes);
    if (in.str(4) != std::string(kMagic, 4))
        throw FormatError("bad checkpoint magic at offset 0");
    uint32_t version = in.u32();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " +
                          std::to_string(version) + " at offset 4");

    ToyModel m;
    m.arch.n_layers = in.u32();
    m.arch.d_model = in.u32();
    m.arch.d_kv = in.u32();
    m.arch.n_heads = in.u32();
    m.arch.vocab_size = in.u32();
    m.arch.max_seq = in.u32();
    uint32_t preset_len = in.u32();
    m.arch.preset_id = in.str(preset_len);
    m.arch.validate();

    m.r = in.u32();
    m.alpha = in.f64();
    m.dropout_p = in.f64();
    m.seed = in.u64();
    m.quant.bits = in.u8();
    uint8_t cb = in.u8();
    if (cb > 1)
        throw FormatError("unknown codebook id " + std::to_string(cb) +
                          " at offset " + std::to_string(in.pos() - 1));
    m.quant.codebook = static_cast<CodebookId>(cb);
    m.quant.block_size = in.u32();
    m.quant.validate();

    m.embed_q = read_quantized(in);
    m.pos_q = read_quantized(in);
    m.norm_final_q = read_quantized(in);
    m.head_q = read_quantized(in);
    for (int64_t li = 0; li < m.arch.n_layers; ++li) {
        LayerWeights lw;
        lw.q.base = read_quantized(in);
        lw.k.base = read_quantized(in);
        lw.v.base = read_quantized(in);
        lw.wo_q = read_quantized(in);
        lw.w1_q = read_quantized(in);
        lw.w2_q = read_quantized(in);
        lw.norm_attn_q = read_quantized(in);
        lw.norm_mlp_q = read_quantized(in);
        m.layers.push_back(std::move(lw));
    }

    uint64_t adapter_len = in.u64();
    const uint8_t* p = in.bytes(adapter_len);
    std::vector<LoraAdapter> adapters =
        parse_adapters(std::vector<uint8_t>(p, p + adapter_len));
    if (adapters.size() != m.layers.size() * 3)
        throw FormatError("checkpoint has " + std::to_string(adapters.size()) +
                          " adapters, expected " +
                          std::to_string(m.layers.size() * 3));
    size_t idx = 0;
    for (LayerWeights& lw : m.layers) {
        for (AdaptedLinear* lin : {&lw.q, &lw.k, &lw.v}) {
            const LoraAdapter& a = adapters[idx++];
            if (a.n_out() != lin->base.shape[0] || a.n_in() != lin->base.shape[1])
                throw FormatError("adapter " + a.name + " is " +
                                  std::to_string(a.n_out()) + "x" +
                                  std::to_string(a.n_in()) +
                                  ", base expects " +
                                  std::to_string(lin->base.shape[0]) + "x" +
                                  std::to_string(lin->base.shape[1]));
            lin->adapters.push_back(a);
        }
    }

    if (!in.done())
        throw FormatError("trailing bytes at offset " + std::to_string(in.pos()));
    m.refresh_caches();
    return m;
}

void save_model(const ToyModel& m, const std::string& path) {
    write_file_bytes(path, serialize_model(m));
}

ToyModel load_model(const std::string& path) {
    return parse_model(read_file_bytes(path));
}

}  // namespace loft
