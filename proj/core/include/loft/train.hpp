#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loft/data.hpp"
#include "loft/metrics.hpp"
#include "loft/model.hpp"
#include "loft/parallel.hpp"

namespace loft {

struct TrainConfig {
    ArchConfig arch = ArchConfig::preset("toy");
    QuantConfig quant;  // 8-bit absmax blocks by default
    int64_t r = 8;
    double alpha = 32.0;
    double dropout = 0.0;
    uint64_t seed = 0;

    int64_t epochs = 1;
    int64_t batch_size = 16;
    double lr = 1e-4;
    OptimKind optimizer = OptimKind::zero_one_adam;
    int64_t freeze_step = 0;  // 0 = first quarter of the step budget
    int64_t workers = 1;

    std::vector<std::string> data_paths;  // several paths = multi-task
    std::string eval_data;                // epoch metrics use this when set
    bool one_shot = false;
    std::map<std::string, std::string> label_map;

    std::string out_dir = ".";
    int64_t max_eval_examples = 200;
    int64_t max_new_tokens = 16;
};

// Turns a record into the training token sequence
// [BOS] + prompt + answer + [EOS] with prompt_len = 1 + prompt tokens. The
// model input (all but the last token) must fit max_seq.
TrainExample tokenize_example(const ArchConfig& arch, const TaskRecord& rec,
                              const TaskRecord* one_shot = nullptr);

struct EpochRecord {
    int64_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    std::optional<double> weighted_f1;
    double worker_hours = 0.0;
    uint64_t bits_transmitted = 0;
};

struct FinetuneResult {
    ToyModel model;  // adapters hold the finetuned state
    std::vector<EpochRecord> epochs;
    std::string adapter_path;
    std::string metrics_path;
    std::string checkpoint_path;
    TaskRecord one_shot_example;  // meaningful when cfg.one_shot
};

// Loads and concatenates the datasets (shuffled once with the run seed),
// builds the model, and runs synchronized data-parallel steps for the
// configured epochs. Writes <out>/adapter.flra, <out>/model.flck, and
// <out>/metrics.jsonl (one record per epoch with fields epoch, loss,
// accuracy, weighted_f1, worker_hours, bits_transmitted). records may be
// passed directly instead of data_paths.
FinetuneResult run_finetune(const TrainConfig& cfg,
                            const std::vector<TaskRecord>* records = nullptr);

struct EvalReport {
    EvalResult metrics;
    std::vector<std::string> predictions;
    std::vector<double> latencies_s;  // one per example
    double mean_latency_s = 0.0;
    int64_t decode_failures = 0;
};

// Greedy decoding over the dataset; a per-example failure (for instance a
// prompt that does not fit the context window) is recorded and scored as
// an empty prediction.
EvalReport run_eval(const ToyModel& model,
                    const std::vector<TaskRecord>& records, bool one_shot,
                    int64_t max_new_tokens,
                    const TaskRecord* one_shot_example = nullptr);

}  // namespace loft
