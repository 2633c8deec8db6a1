#include "loft/model.hpp"

#include <cmath>

#include "loft/errors.hpp"
#include "loft/hash.hpp"

namespace loft {

namespace {
constexpr double kNormEps = 1e-6;
}

// ---- tokenizer ---------------------------------------------------------

std::vector<int64_t> encode_bytes(const std::string& text) {
    std::vector<int64_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int64_t>(c));
    return ids;
}

std::string decode_bytes(const std::vector<int64_t>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int64_t id : ids)
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    return out;
}

// ---- ArchConfig --------------------------------------------------------

void ArchConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || d_kv < 1 || n_heads < 1 ||
        vocab_size < 2 || max_seq < 1)
        throw ConfigError("architecture dims must be positive (layers=" +
                          std::to_string(n_layers) + ", d_model=" +
                          std::to_string(d_model) + ", d_kv=" +
                          std::to_string(d_kv) + ", heads=" +
                          std::to_string(n_heads) + ", vocab=" +
                          std::to_string(vocab_size) + ", max_seq=" +
                          std::to_string(max_seq) + ")");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (d_kv > d_model)
        throw ConfigError("d_kv " + std::to_string(d_kv) + " exceeds d_model " +
                          std::to_string(d_model));
    if (d_kv % head_dim() != 0)
        throw ConfigError("d_kv " + std::to_string(d_kv) +
                          " not divisible by head_dim " +
                          std::to_string(head_dim()));
    if (n_heads % n_kv_heads() != 0)
        throw ConfigError("n_heads " + std::to_string(n_heads) +
                          " not divisible by kv head count " +
                          std::to_string(n_kv_heads()));
}

ArchConfig ArchConfig::preset(const std::string& name) {
    ArchConfig a;
    a.preset_id = name;
    if (name == "toy") {
        a.n_layers = 2;
        a.d_model = 32;
        a.d_kv = 16;
        a.n_heads = 4;
        a.vocab_size = kByteVocabSize;
        a.max_seq = 96;
    } else if (name == "llama3-8b") {
        a.n_layers = 32;
        a.d_model = 4096;
        a.d_kv = 1024;
        a.n_heads = 32;
        a.vocab_size = 128256;
        a.max_seq = 8192;
    } else if (name == "llama3-70b") {
        a.n_layers = 80;
        a.d_model = 8192;
        a.d_kv = 1024;
        a.n_heads = 64;
        a.vocab_size = 128256;
        a.max_seq = 8192;
    } else {
        throw ConfigError("unknown architecture preset '" + name + "'");
    }
    a.validate();
    return a;
}

// ---- forward backends --------------------------------------------------
// One layer/head implementation instantiated over two backends, so the
// training tape and the plain inference path run the identical op sequence.

namespace {

struct PlainOps {
    using V = Tensor;

    V constant(const Tensor& t, const char*) const { return t; }
    V adapter(const Tensor& t, const std::string&) const { return t; }
    V matmul(const V& a, const V& b) const { return loft::matmul(a, b); }
    V add(const V& a, const V& b) const { return loft::add(a, b); }
    V scale(const V& a, double s) const { return loft::scale(a, s); }
    V transpose(const V& a) const { return loft::transpose(a); }
    V silu(const V& a) const { return silu_value(a); }
    V rmsnorm(const V& x, const V& g, double eps) const {
        return rmsnorm_rows_value(x, g, eps);
    }
    V causal_softmax(const V& a) const { return causal_softmax_rows_value(a); }
    V dropout(const V& a, double) const { return a; }  // eval mode
    V slice_cols(const V& a, int64_t c0, int64_t c1) const {
        return loft::slice_cols(a, c0, c1);
    }
    V concat_cols(const std::vector<V>& parts) const {
        return loft::concat_cols(parts);
    }
};

struct TapeOps {
    using V = Var;
    Tape* tape;
    Rng* rng;
    std::vector<Var>* param_sink;

    V constant(const Tensor& t, const char* name) const {
        return tape->leaf(t, false, true, name);
    }
    V adapter(const Tensor& t, const std::string& name) const {
        Var v = tape->leaf(t, true, false, name);
        param_sink->push_back(v);
        return v;
    }
    V matmul(V a, V b) const { return tape->matmul(a, b); }
    V add(V a, V b) const { return tape->add(a, b); }
    V scale(V a, double s) const { return tape->scale(a, s); }
    V transpose(V a) const { return tape->transpose(a); }
    V silu(V a) const { return tape->silu(a); }
    V rmsnorm(V x, V g, double eps) const {
        return tape->rmsnorm_rows(x, g, eps);
    }
    V causal_softmax(V a) const { return tape->causal_softmax_rows(a); }
    V dropout(V a, double p) const { return tape->dropout(a, p, *rng, true); }
    V slice_cols(V a, int64_t c0, int64_t c1) const {
        return tape->slice_cols(a, c0, c1);
    }
    V concat_cols(const std::vector<V>& parts) const {
        return tape->concat_cols(parts);
    }
};

template <class O>
typename O::V adapted_projection(const O& o, typename O::V x,
                                 typename O::V base_t, typename O::V A,
                                 typename O::V B, const LoraAdapter& meta) {
    auto y = o.matmul(x, base_t);
    auto xa = o.dropout(x, meta.dropout_p);
    auto h = o.matmul(xa, o.transpose(A));
    auto delta = o.matmul(h, o.transpose(B));
    return o.add(y, o.scale(delta, meta.alpha / static_cast<double>(meta.r)));
}

template <class O>
typename O::V layer_forward(const O& o, const ArchConfig& arch,
                            const LayerWeights& lw, int64_t li,
                            typename O::V x) {
    const std::string p = "layer" + std::to_string(li) + ".";
    auto norm_attn = o.constant(lw.norm_attn_d, "norm_attn");
    auto h = o.rmsnorm(x, norm_attn, kNormEps);

    // Adapter leaves are bound one statement at a time: their creation order
    // defines the trainable parameter order.
    auto q_base = o.constant(lw.q.base_dense_t, "wq");
    auto qA = o.adapter(lw.q.adapters[0].A, p + "q.A");
    auto qB = o.adapter(lw.q.adapters[0].B, p + "q.B");
    auto q = adapted_projection(o, h, q_base, qA, qB, lw.q.adapters[0]);
    auto k_base = o.constant(lw.k.base_dense_t, "wk");
    auto kA = o.adapter(lw.k.adapters[0].A, p + "k.A");
    auto kB = o.adapter(lw.k.adapters[0].B, p + "k.B");
    auto k = adapted_projection(o, h, k_base, kA, kB, lw.k.adapters[0]);
    auto v_base = o.constant(lw.v.base_dense_t, "wv");
    auto vA = o.adapter(lw.v.adapters[0].A, p + "v.A");
    auto vB = o.adapter(lw.v.adapters[0].B, p + "v.B");
    auto v = adapted_projection(o, h, v_base, vA, vB, lw.v.adapters[0]);

    const int64_t hd = arch.head_dim();
    const int64_t group = arch.n_heads / arch.n_kv_heads();
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<typename O::V> heads;
    heads.reserve(static_cast<size_t>(arch.n_heads));
    for (int64_t hh = 0; hh < arch.n_heads; ++hh) {
        auto qh = o.slice_cols(q, hh * hd, (hh + 1) * hd);
        int64_t g = hh / group;
        auto kh = o.slice_cols(k, g * hd, (g + 1) * hd);
        auto vh = o.slice_cols(v, g * hd, (g + 1) * hd);
        auto scores = o.scale(o.matmul(qh, o.transpose(kh)), inv_sqrt_hd);
        auto probs = o.causal_softmax(scores);
        heads.push_back(o.matmul(probs, vh));
    }
    auto ctx = o.concat_cols(heads);
    auto attn = o.matmul(ctx, o.constant(lw.wo_t, "wo"));
    x = o.add(x, attn);

    auto norm_mlp = o.constant(lw.norm_mlp_d, "norm_mlp");
    auto h2 = o.rmsnorm(x, norm_mlp, kNormEps);
    auto up = o.matmul(h2, o.constant(lw.w1_t, "w1"));
    auto mlp = o.matmul(o.silu(up), o.constant(lw.w2_t, "w2"));
    return o.add(x, mlp);
}

template <class O>
typename O::V head_forward(const O& o, const Tensor& norm_final,
                           const Tensor& head_t, typename O::V x) {
    auto xf = o.rmsnorm(x, o.constant(norm_final, "norm_final"), kNormEps);
    return o.matmul(xf, o.constant(head_t, "head"));
}

}  // namespace

// ---- LayerWeights ------------------------------------------------------

void LayerWeights::refresh_cache() {
    q.refresh_cache();
    k.refresh_cache();
    v.refresh_cache();
    wo_t = transpose(dequantize(wo_q));
    w1_t = transpose(dequantize(w1_q));
    w2_t = transpose(dequantize(w2_q));
    norm_attn_d = dequantize(norm_attn_q);
    norm_mlp_d = dequantize(norm_mlp_q);
}

// ---- ToyModel ----------------------------------------------------------

void ToyModel::check_tokens(const std::vector<int64_t>& tokens) const {
    if (tokens.empty()) throw DomainError("empty token sequence");
    if (static_cast<int64_t>(tokens.size()) > arch.max_seq)
        throw DomainError("sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq " + std::to_string(arch.max_seq));
    for (int64_t t : tokens)
        if (t < 0 || t >= arch.vocab_size)
            throw VocabError("token id " + std::to_string(t) +
                             " outside vocabulary of size " +
                             std::to_string(arch.vocab_size));
}

Tensor ToyModel::eval_embed(const std::vector<int64_t>& tokens) const {
    check_tokens(tokens);
    const int64_t T = static_cast<int64_t>(tokens.size());
    Tensor x({T, arch.d_model});
    for (int64_t t = 0; t < T; ++t) {
        int64_t id = tokens[static_cast<size_t>(t)];
        for (int64_t i = 0; i < arch.d_model; ++i)
            x.at(t, i) = embed_d.at(id, i) + pos_d.at(t, i);
    }
    return x;
}

Tensor ToyModel::eval_layer(int64_t layer, const Tensor& x) const {
    if (layer < 0 || layer >= arch.n_layers)
        throw DomainError("layer index " + std::to_string(layer) +
                          " outside [0, " + std::to_string(arch.n_layers) + ")");
    PlainOps o;
    return layer_forward(o, arch, layers[static_cast<size_t>(layer)], layer, x);
}

Tensor ToyModel::eval_head(const Tensor& x) const {
    PlainOps o;
    return head_forward(o, norm_final_d, head_t, x);
}

Tensor ToyModel::forward_eval(const std::vector<int64_t>& tokens) const {
    Tensor x = eval_embed(tokens);
    for (int64_t li = 0; li < arch.n_layers; ++li) x = eval_layer(li, x);
    return eval_head(x);
}

std::vector<int64_t> ToyModel::generate(const std::vector<int64_t>& prompt,
                                        int64_t max_new) const {
    std::vector<int64_t> ids = prompt;
    std::vector<int64_t> out;
    for (int64_t step = 0; step < max_new; ++step) {
        if (static_cast<int64_t>(ids.size()) >= arch.max_seq) break;
        Tensor logits = forward_eval(ids);
        int64_t last = logits.rows() - 1;
        int64_t best = 0;
        double best_v = logits.at(last, 0);
        for (int64_t j = 1; j < logits.cols(); ++j) {
            if (logits.at(last, j) > best_v) {  // ties keep the lowest id
                best_v = logits.at(last, j);
                best = j;
            }
        }
        if (best == kEosId) break;
        ids.push_back(best);
        out.push_back(best);
    }
    return out;
}

TrainGraph ToyModel::forward_train(const std::vector<int64_t>& tokens,
                                   Rng& dropout_rng) const {
    TrainGraph g;
    g.tape = std::make_unique<Tape>();
    TapeOps o{g.tape.get(), &dropout_rng, &g.params};
    Var x = o.constant(eval_embed(tokens), "embed");
    for (int64_t li = 0; li < arch.n_layers; ++li)
        x = layer_forward(o, arch, layers[static_cast<size_t>(li)], li, x);
    g.logits = head_forward(o, norm_final_d, head_t, x);
    return g;
}

namespace {

struct LossSpec {
    std::vector<int64_t> input;
    std::vector<int64_t> targets;
    std::vector<uint8_t> active;
};

LossSpec loss_spec(const TrainExample& ex) {
    const int64_t n = static_cast<int64_t>(ex.tokens.size());
    if (n < 2) throw DomainError("training example needs at least two tokens");
    if (ex.prompt_len < 1 || ex.prompt_len >= n)
        throw DomainError("prompt_len " + std::to_string(ex.prompt_len) +
                          " leaves no answer tokens in a sequence of length " +
                          std::to_string(n));
    LossSpec s;
    s.input.assign(ex.tokens.begin(), ex.tokens.end() - 1);
    s.targets.assign(ex.tokens.begin() + 1, ex.tokens.end());
    s.active.assign(s.targets.size(), 0);
    for (int64_t t = ex.prompt_len - 1; t < n - 1; ++t)
        s.active[static_cast<size_t>(t)] = 1;
    return s;
}

}  // namespace

LossGraph ToyModel::loss_train(const TrainExample& ex, Rng& dropout_rng) const {
    LossSpec s = loss_spec(ex);
    TrainGraph g = forward_train(s.input, dropout_rng);
    Var loss = g.tape->cross_entropy_rows(g.logits, std::move(s.targets),
                                          std::move(s.active));
    return LossGraph{std::move(g.tape), loss, std::move(g.params)};
}

double ToyModel::loss_eval(const TrainExample& ex) const {
    LossSpec s = loss_spec(ex);
    Tensor logits = forward_eval(s.input);
    return cross_entropy_rows_value(logits, s.targets, s.active);
}

std::vector<Tensor*> ToyModel::trainable_params() {
    std::vector<Tensor*> out;
    for (LayerWeights& lw : layers) {
        for (AdaptedLinear* lin : {&lw.q, &lw.k, &lw.v}) {
            out.push_back(&lin->adapters[0].A);
            out.push_back(&lin->adapters[0].B);
        }
    }
    return out;
}

std::vector<const Tensor*> ToyModel::trainable_params() const {
    std::vector<const Tensor*> out;
    for (const LayerWeights& lw : layers) {
        for (const AdaptedLinear* lin : {&lw.q, &lw.k, &lw.v}) {
            out.push_back(&lin->adapters[0].A);
            out.push_back(&lin->adapters[0].B);
        }
    }
    return out;
}

std::vector<std::string> ToyModel::trainable_names() const {
    std::vector<std::string> out;
    for (size_t li = 0; li < layers.size(); ++li)
        for (const char* proj : {"q", "k", "v"})
            for (const char* part : {"A", "B"})
                out.push_back("layer" + std::to_string(li) + "." + proj + "." +
                              part);
    return out;
}

int64_t ToyModel::trainable_param_count() const {
    int64_t total = 0;
    for (const Tensor* t : trainable_params()) total += t->numel();
    return total;
}

std::vector<LoraAdapter> ToyModel::collect_adapters() const {
    std::vector<LoraAdapter> out;
    for (const LayerWeights& lw : layers)
        for (const AdaptedLinear* lin : {&lw.q, &lw.k, &lw.v})
            out.push_back(lin->adapters[0]);
    return out;
}

void ToyModel::replace_adapters(const std::vector<LoraAdapter>& adapters) {
    if (adapters.size() != layers.size() * 3)
        throw ShapeError("adapter count " + std::to_string(adapters.size()) +
                         " does not match " + std::to_string(layers.size() * 3) +
                         " projections");
    size_t idx = 0;
    for (LayerWeights& lw : layers) {
        for (AdaptedLinear* lin : {&lw.q, &lw.k, &lw.v}) {
            const LoraAdapter& a = adapters[idx++];
            if (a.n_in() != lin->n_in() || a.n_out() != lin->n_out())
                throw ShapeError("adapter " + std::to_string(a.n_in()) + "->" +
                                 std::to_string(a.n_out()) +
                                 " does not fit projection " +
                                 std::to_string(lin->n_in()) + "->" +
                                 std::to_string(lin->n_out()));
            lin->adapters[0] = a;
        }
    }
}

uint64_t ToyModel::trainable_hash() const {
    Fnv1a64 h;
    for (const Tensor* t : trainable_params()) h.update_span(t->data());
    return h.value();
}

uint64_t ToyModel::base_hash() const {
    Fnv1a64 h;
    auto mix = [&h](const QuantizedTensor& q) { h.update_u64(hash_quantized(q)); };
    mix(embed_q);
    mix(pos_q);
    mix(norm_final_q);
    mix(head_q);
    for (const LayerWeights& lw : layers) {
        mix(lw.q.base);
        mix(lw.k.base);
        mix(lw.v.base);
        mix(lw.wo_q);
        mix(lw.w1_q);
        mix(lw.w2_q);
        mix(lw.norm_attn_q);
        mix(lw.norm_mlp_q);
    }
    return h.value();
}

void ToyModel::refresh_caches() {
    embed_d = dequantize(embed_q);
    pos_d = dequantize(pos_q);
    norm_final_d = dequantize(norm_final_q);
    head_t = transpose(dequantize(head_q));
    for (LayerWeights& lw : layers) lw.refresh_cache();
}

// ---- construction ------------------------------------------------------

ToyModel build_model(const ArchConfig& arch, const QuantConfig& quant,
                     int64_t r, double alpha, double dropout_p, uint64_t seed) {
    arch.validate();
    quant.validate();
    if (arch.d_model > 128)
        throw ConfigError("buildable models are desk-scale: d_model " +
                          std::to_string(arch.d_model) + " exceeds 128");
    if (r < 1) throw RankError("rank must be at least 1, got " + std::to_string(r));
    if (alpha <= 0.0)
        throw ConfigError("alpha must be positive, got " + std::to_string(alpha));

    ToyModel m;
    m.arch = arch;
    m.quant = quant;
    m.r = r;
    m.alpha = alpha;
    m.dropout_p = dropout_p;
    m.seed = seed;

    Rng rng(seed);
    uint64_t tag = 0;
    auto sample_q = [&](std::vector<int64_t> shape) {
        Rng sub = rng.fork(tag++);
        return quantize(Tensor::gaussian(std::move(shape), sub, 0.0, 0.02),
                        quant);
    };
    auto ones_q = [&](int64_t n) { return quantize(Tensor::full({n}, 1.0), quant); };

    m.embed_q = sample_q({arch.vocab_size, arch.d_model});
    m.pos_q = sample_q({arch.max_seq, arch.d_model});
    m.norm_final_q = ones_q(arch.d_model);
    m.head_q = sample_q({arch.vocab_size, arch.d_model});  // n_out x n_in

    for (int64_t li = 0; li < arch.n_layers; ++li) {
        LayerWeights lw;
        auto adapted = [&](int64_t n_out, const std::string& name) {
            Rng base_rng = rng.fork(tag++);
            Tensor w0 = Tensor::gaussian({n_out, arch.d_model}, base_rng, 0.0,
                                         0.02);
            Rng a_rng = rng.fork(tag++);
            std::vector<LoraAdapter> as;
            as.push_back(init_adapter(arch.d_model, n_out, r, alpha, dropout_p,
                                      a_rng, name));
            return make_adapted_linear(w0, quant, std::move(as));
        };
        std::string p = "layer" + std::to_string(li) + ".";
        lw.q = adapted(arch.d_model, p + "q");
        lw.k = adapted(arch.d_kv, p + "k");
        lw.v = adapted(arch.d_kv, p + "v");
        lw.wo_q = sample_q({arch.d_model, arch.d_model});
        lw.w1_q = sample_q({arch.d_ff(), arch.d_model});
        lw.w2_q = sample_q({arch.d_model, arch.d_ff()});
        lw.norm_attn_q = ones_q(arch.d_model);
        lw.norm_mlp_q = ones_q(arch.d_model);
        m.layers.push_back(std::move(lw));
    }
    m.refresh_caches();
    return m;
}

}  // namespace loft
