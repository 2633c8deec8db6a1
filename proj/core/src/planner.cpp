#include "loft/planner.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "loft/errors.hpp"

namespace loft {

namespace {

constexpr int64_t kBaseParams8B = 8'030'000'000;
constexpr int64_t kBaseParams70B = 70'560'000'000;

}  // namespace

int64_t count_lora_params(const ArchConfig& arch, int64_t r) {
    if (r < 1) throw RankError("rank must be at least 1");
    return arch.n_layers * r *
           (2 * arch.d_model + 2 * (arch.d_model + arch.d_kv));
}

int64_t base_param_count(const ArchConfig& arch) {
    if (arch.preset_id == "llama3-8b") return kBaseParams8B;
    if (arch.preset_id == "llama3-70b") return kBaseParams70B;
    const int64_t d = arch.d_model;
    const int64_t dkv = arch.d_kv;
    const int64_t per_layer = d * d          // q
                              + 2 * dkv * d  // k, v
                              + d * d        // attention output
                              + 2 * arch.d_ff() * d  // mlp in/out
                              + 2 * d;       // norm gains
    return arch.vocab_size * d + arch.max_seq * d + d  // embed, pos, final norm
           + d * arch.vocab_size                       // head
           + arch.n_layers * per_layer;
}

int64_t model_bytes(int64_t base_params, int64_t bits) {
    if (bits != 4 && bits != 8 && bits != 16)
        throw ConfigError("width must be 4, 8, or 16 bits");
    return base_params * bits / 8;
}

PlanReport plan(const ArchConfig& arch, int64_t r, int64_t bits) {
    if (bits != 4 && bits != 8 && bits != 16)
        throw ConfigError("width must be 4, 8, or 16 bits");
    PlanReport rep;
    rep.preset = arch.preset_id.empty() ? "custom" : arch.preset_id;
    rep.r = r;
    rep.bits = bits;
    rep.trainable_params = count_lora_params(arch, r);
    rep.adapter_bytes = 2 * rep.trainable_params;

    const int64_t base = base_param_count(arch);
    for (int64_t b : {4, 8, 16}) rep.model_bytes_by_bits[b] = model_bytes(base, b);

    const double full = static_cast<double>(rep.model_bytes_by_bits[16]);
    auto ratio = [&](int64_t b) {
        return 100.0 *
               static_cast<double>(rep.model_bytes_by_bits[b] +
                                   rep.adapter_bytes) /
               full;
    };
    rep.ratio_8 = ratio(8);
    rep.ratio_4 = ratio(4);
    rep.ratio_requested = ratio(bits);
    rep.notes.push_back(
        "weight storage only: activations, optimizer state, and runtime "
        "overheads are workload-dependent and not modeled");
    return rep;
}

namespace {

std::string format_fixed(double value, int decimals, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f%s", decimals, value, suffix);
    return buf;
}

}  // namespace

std::string format_gb(int64_t bytes) {
    return format_fixed(static_cast<double>(bytes) / 1e9, 2, " GB");
}

std::string format_mib(int64_t bytes) {
    return format_fixed(static_cast<double>(bytes) / (1024.0 * 1024.0), 1,
                        " MiB");
}

std::string render_plan_text(const PlanReport& rep) {
    std::string out;
    auto line = [&](const std::string& label, const std::string& value) {
        out += label;
        out.append(label.size() < 24 ? 24 - label.size() : 1, ' ');
        out += value;
        out += '\n';
    };
    line("arch", rep.preset);
    line("rank", std::to_string(rep.r));
    line("width", std::to_string(rep.bits) + "-bit");
    line("trainable params", std::to_string(rep.trainable_params));
    line("adapter size", format_mib(rep.adapter_bytes) + " (" +
                             std::to_string(rep.adapter_bytes) + " bytes)");
    line("model size 16-bit", format_gb(rep.model_bytes_by_bits.at(16)));
    line("model size 8-bit", format_gb(rep.model_bytes_by_bits.at(8)) + " (" +
                                 format_fixed(rep.ratio_8, 2, "%") + ")");
    line("model size 4-bit", format_gb(rep.model_bytes_by_bits.at(4)) + " (" +
                                 format_fixed(rep.ratio_4, 2, "%") + ")");
    for (const std::string& n : rep.notes) out += "note: " + n + "\n";
    return out;
}

std::string plan_record(const PlanReport& rep) {
    nlohmann::json j;
    j["preset"] = rep.preset;
    j["r"] = rep.r;
    j["bits"] = rep.bits;
    j["trainable_params"] = rep.trainable_params;
    j["adapter_bytes"] = rep.adapter_bytes;
    j["model_bytes_16"] = rep.model_bytes_by_bits.at(16);
    j["model_bytes_8"] = rep.model_bytes_by_bits.at(8);
    j["model_bytes_4"] = rep.model_bytes_by_bits.at(4);
    j["ratio_8"] = rep.ratio_8;
    j["ratio_4"] = rep.ratio_4;
    return j.dump();
}

}  // namespace loft
