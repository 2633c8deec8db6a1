#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "loft/autograd.hpp"
#include "loft/lora.hpp"
#include "loft/quant.hpp"
#include "loft/rng.hpp"
#include "loft/tensor.hpp"

namespace loft {

// Byte-level tokenizer: ids 0..255 are raw bytes, then BOS and EOS.
constexpr int64_t kBosId = 256;
constexpr int64_t kEosId = 257;
constexpr int64_t kByteVocabSize = 258;

std::vector<int64_t> encode_bytes(const std::string& text);
// Inverse on byte ids; non-byte ids (BOS/EOS) are dropped.
std::string decode_bytes(const std::vector<int64_t>& ids);

struct ArchConfig {
    int64_t n_layers = 0;
    int64_t d_model = 0;
    int64_t d_kv = 0;
    int64_t n_heads = 0;
    int64_t vocab_size = 0;
    int64_t max_seq = 0;
    std::string preset_id;

    int64_t d_ff() const { return 4 * d_model; }
    int64_t head_dim() const { return d_model / n_heads; }
    int64_t n_kv_heads() const { return d_kv / head_dim(); }

    void validate() const;
    // "toy", "llama3-8b", "llama3-70b"; ConfigError otherwise.
    static ArchConfig preset(const std::string& name);
};

// One decoder block. Weight payloads are stored output-major (n_out x n_in);
// the *_t caches hold the dequantized transpose used by the row-major
// forward pass. q/k/v carry the trainable adapters.
struct LayerWeights {
    AdaptedLinear q, k, v;
    QuantizedTensor wo_q, w1_q, w2_q, norm_attn_q, norm_mlp_q;
    Tensor wo_t, w1_t, w2_t, norm_attn_d, norm_mlp_d;

    void refresh_cache();
};

// Tape-backed forward pass: the tape owns the graph, params holds the
// adapter leaves in the model's trainable order.
struct TrainGraph {
    std::unique_ptr<Tape> tape;
    Var logits;
    std::vector<Var> params;
};

// One training sequence: [BOS] + prompt + answer + [EOS] as token ids.
// prompt_len counts BOS plus the prompt tokens; only positions predicting
// answer/EOS tokens contribute to the loss.
struct TrainExample {
    std::vector<int64_t> tokens;
    int64_t prompt_len = 0;
};

struct LossGraph {
    std::unique_ptr<Tape> tape;
    Var loss;
    std::vector<Var> params;
};

// Pre-norm decoder transformer over byte tokens. All base weights are
// frozen block-quantized payloads; the LoRA adapters on q/k/v are the only
// trainable state.
class ToyModel {
public:
    ArchConfig arch;
    QuantConfig quant;
    int64_t r = 0;
    double alpha = 32.0;
    double dropout_p = 0.0;
    uint64_t seed = 0;

    QuantizedTensor embed_q, pos_q, norm_final_q, head_q;
    Tensor embed_d;       // vocab x d_model
    Tensor pos_d;         // max_seq x d_model
    Tensor norm_final_d;  // d_model
    Tensor head_t;        // d_model x vocab
    std::vector<LayerWeights> layers;

    // ---- inference path (plain tensors, eval mode) --------------------
    Tensor eval_embed(const std::vector<int64_t>& tokens) const;
    Tensor eval_layer(int64_t layer, const Tensor& x) const;
    Tensor eval_head(const Tensor& x) const;
    Tensor forward_eval(const std::vector<int64_t>& tokens) const;

    // Greedy decoding; returns generated ids after the prompt, EOS excluded.
    std::vector<int64_t> generate(const std::vector<int64_t>& prompt,
                                  int64_t max_new) const;

    // ---- training path -------------------------------------------------
    // dropout_rng must be derived per example so results are independent of
    // worker sharding.
    TrainGraph forward_train(const std::vector<int64_t>& tokens,
                             Rng& dropout_rng) const;

    // Masked next-token loss for one example: the graph feeds
    // ex.tokens[:-1] and averages cross-entropy over the positions that
    // predict ex.tokens[prompt_len:].
    LossGraph loss_train(const TrainExample& ex, Rng& dropout_rng) const;
    double loss_eval(const TrainExample& ex) const;

    // ---- trainable state -----------------------------------------------
    // Fixed order: per layer q.A, q.B, k.A, k.B, v.A, v.B.
    std::vector<Tensor*> trainable_params();
    std::vector<const Tensor*> trainable_params() const;
    std::vector<std::string> trainable_names() const;
    int64_t trainable_param_count() const;
    std::vector<LoraAdapter> collect_adapters() const;
    void replace_adapters(const std::vector<LoraAdapter>& adapters);

    // Digest of adapter values (replica coherence checks).
    uint64_t trainable_hash() const;
    // Digest of every quantized payload (frozen-base invariance checks).
    uint64_t base_hash() const;

    void refresh_caches();

private:
    void check_tokens(const std::vector<int64_t>& tokens) const;
};

ToyModel build_model(const ArchConfig& arch, const QuantConfig& quant,
                     int64_t r, double alpha, double dropout_p, uint64_t seed);

// ---- checkpoint (model_io.cpp) ----------------------------------------
// Magic "FLCK", version u32, arch + run config, quantized payloads in fixed
// order, then the adapter blob in the adapter file format.
std::vector<uint8_t> serialize_model(const ToyModel& m);
ToyModel parse_model(const std::vector<uint8_t>& bytes);
void save_model(const ToyModel& m, const std::string& path);
ToyModel load_model(const std::string& path);

}  // namespace loft
