#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loft/model.hpp"

namespace loft {

// Trainable adapter elements for rank-r q/k/v adapters:
// per layer, q maps d_model->d_model and k, v map d_model->d_kv, so
// n_layers * r * (2*d_model + 2*(d_model + d_kv)).
int64_t count_lora_params(const ArchConfig& arch, int64_t r);

// Frozen-weight element count. The llama3 presets use published totals
// (their full embedding/MLP dims are not part of ArchConfig); any other
// config is counted exactly from the weights build_model materializes.
int64_t base_param_count(const ArchConfig& arch);

// Weight storage at the given width: base_params * bits / 8.
int64_t model_bytes(int64_t base_params, int64_t bits);

struct PlanReport {
    std::string preset;
    int64_t r = 0;
    int64_t bits = 0;
    int64_t trainable_params = 0;
    int64_t adapter_bytes = 0;                     // 2 bytes per element
    std::map<int64_t, int64_t> model_bytes_by_bits;  // keys 4, 8, 16
    double ratio_8 = 0.0;   // percent of the 16-bit footprint, adapters included
    double ratio_4 = 0.0;
    double ratio_requested = 0.0;
    std::vector<std::string> notes;
};

// bits is the quantized width the plan is for; all three footprints are
// reported regardless so the ratios are always available.
PlanReport plan(const ArchConfig& arch, int64_t r, int64_t bits);

std::string format_gb(int64_t bytes);   // decimal GB, 2 decimals
std::string format_mib(int64_t bytes);  // binary MiB, 1 decimal

std::string render_plan_text(const PlanReport& report);
// One JSON object per report; field names are part of the interface:
// trainable_params, adapter_bytes, model_bytes_16/8/4, ratio_8, ratio_4.
std::string plan_record(const PlanReport& report);

}  // namespace loft
