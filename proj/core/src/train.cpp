#include "loft/train.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "loft/errors.hpp"
#include "loft/lora.hpp"

namespace loft {

// Seed-derivation tags; disjoint ranges so streams never collide.
namespace {
constexpr uint64_t kTagShuffle = 1;
constexpr uint64_t kTagEpochBase = 1'000;
constexpr uint64_t kTagStepBase = 1'000'000;
}  // namespace

TrainExample tokenize_example(const ArchConfig& arch, const TaskRecord& rec,
                              const TaskRecord* one_shot) {
    const std::string prompt = assemble_prompt(rec, one_shot);
    TrainExample ex;
    ex.tokens.push_back(kBosId);
    for (int64_t id : encode_bytes(prompt)) ex.tokens.push_back(id);
    ex.prompt_len = static_cast<int64_t>(ex.tokens.size());
    for (int64_t id : encode_bytes(rec.output)) ex.tokens.push_back(id);
    ex.tokens.push_back(kEosId);
    if (static_cast<int64_t>(ex.tokens.size()) - 1 > arch.max_seq)
        throw DomainError("example needs " +
                          std::to_string(ex.tokens.size() - 1) +
                          " input positions, model window is " +
                          std::to_string(arch.max_seq));
    return ex;
}

namespace {

std::vector<TaskRecord> gather_records(const TrainConfig& cfg,
                                       const std::vector<TaskRecord>* direct) {
    std::vector<TaskRecord> records;
    if (direct) records = *direct;
    for (const std::string& path : cfg.data_paths) {
        std::vector<TaskRecord> part = load_jsonl(path);
        records.insert(records.end(), part.begin(), part.end());
    }
    if (!cfg.label_map.empty()) apply_label_map(records, cfg.label_map);
    return records;
}

void append_metrics_line(std::ofstream& out, const EpochRecord& rec) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    j["accuracy"] = rec.accuracy;
    if (rec.weighted_f1)
        j["weighted_f1"] = *rec.weighted_f1;
    else
        j["weighted_f1"] = nullptr;
    j["worker_hours"] = rec.worker_hours;
    j["bits_transmitted"] = rec.bits_transmitted;
    out << j.dump() << '\n';
    out.flush();
}

// Number of batches an epoch actually runs: a ragged tail smaller than the
// worker count cannot be sharded and is dropped.
int64_t batches_per_epoch(int64_t n, int64_t batch, int64_t workers) {
    int64_t count = 0;
    for (int64_t at = 0; at < n; at += batch)
        if (std::min(n, at + batch) - at >= workers) ++count;
    return count;
}

}  // namespace

FinetuneResult run_finetune(const TrainConfig& cfg,
                            const std::vector<TaskRecord>* records_in) {
    if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    if (cfg.workers < 1) throw ConfigError("worker count must be positive");

    std::vector<TaskRecord> records = gather_records(cfg, records_in);
    if (records.empty() && cfg.epochs > 0)
        throw ConfigError("no training examples given");

    ToyModel model = build_model(cfg.arch, cfg.quant, cfg.r, cfg.alpha,
                                 cfg.dropout, cfg.seed);

    // Concatenation order is the file order; one seeded shuffle interleaves
    // the tasks.
    Rng shuffle_rng(derive_seed(cfg.seed, kTagShuffle));
    shuffle_records(records, shuffle_rng);

    FinetuneResult result;
    const TaskRecord* shot = nullptr;
    if (cfg.one_shot && !records.empty()) {
        result.one_shot_example = records[0];
        shot = &result.one_shot_example;
    }

    std::vector<TrainExample> examples;
    examples.reserve(records.size());
    for (const TaskRecord& rec : records)
        examples.push_back(tokenize_example(cfg.arch, rec, shot));

    std::vector<TaskRecord> eval_records;
    if (cfg.eval_data.empty()) {
        eval_records = records;
    } else {
        eval_records = load_jsonl(cfg.eval_data);
        if (!cfg.label_map.empty()) apply_label_map(eval_records, cfg.label_map);
    }
    if (static_cast<int64_t>(eval_records.size()) > cfg.max_eval_examples)
        eval_records.resize(static_cast<size_t>(cfg.max_eval_examples));

    const int64_t n = static_cast<int64_t>(examples.size());
    const int64_t total_steps =
        cfg.epochs * batches_per_epoch(n, cfg.batch_size, cfg.workers);
    const int64_t freeze = cfg.freeze_step > 0
                               ? cfg.freeze_step
                               : std::max<int64_t>(1, total_steps / 4);
    WorkerGroup group =
        make_worker_group(model, cfg.workers, cfg.optimizer,
                          AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}, freeze);

    std::filesystem::create_directories(cfg.out_dir);
    result.adapter_path = cfg.out_dir + "/adapter.flra";
    result.metrics_path = cfg.out_dir + "/metrics.jsonl";
    result.checkpoint_path = cfg.out_dir + "/model.flck";
    std::ofstream mlog(result.metrics_path, std::ios::trunc);
    if (!mlog) throw FormatError("cannot write " + result.metrics_path);

    int64_t global_step = 0;
    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng epoch_rng(derive_seed(cfg.seed, kTagEpochBase +
                                                static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(epoch_rng.next_below(i))]);

        double loss_sum = 0.0;
        int64_t loss_n = 0;
        for (int64_t at = 0; at < n; at += cfg.batch_size) {
            const int64_t end = std::min(n, at + cfg.batch_size);
            if (end - at < cfg.workers) break;
            std::vector<TrainExample> batch;
            for (int64_t i = at; i < end; ++i)
                batch.push_back(examples[static_cast<size_t>(
                    order[static_cast<size_t>(i)])]);
            ++global_step;
            const double loss = ddp_step(
                group, batch,
                derive_seed(cfg.seed,
                            kTagStepBase + static_cast<uint64_t>(global_step)));
            loss_sum += loss * static_cast<double>(end - at);
            loss_n += end - at;
        }

        EvalReport er = run_eval(group.replicas[0], eval_records, cfg.one_shot,
                                 cfg.max_new_tokens, shot);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_n > 0 ? loss_sum / static_cast<double>(loss_n) : 0.0;
        rec.accuracy = er.metrics.accuracy;
        rec.weighted_f1 = er.metrics.weighted_f1;
        rec.worker_hours = group.worker_seconds / 3600.0;
        rec.bits_transmitted = group.bits_transmitted();
        append_metrics_line(mlog, rec);
        result.epochs.push_back(rec);
    }

    result.model = group.replicas[0];
    save_adapters(result.model.collect_adapters(), result.adapter_path);
    save_model(result.model, result.checkpoint_path);
    return result;
}

EvalReport run_eval(const ToyModel& model,
                    const std::vector<TaskRecord>& records, bool one_shot,
                    int64_t max_new_tokens,
                    const TaskRecord* one_shot_example) {
    EvalReport rep;
    const TaskRecord* shot = nullptr;
    if (one_shot && !records.empty())
        shot = one_shot_example ? one_shot_example : &records[0];

    std::vector<std::string> golds;
    for (const TaskRecord& rec : records) {
        golds.push_back(rec.output);
        std::vector<int64_t> prompt_tokens;
        prompt_tokens.push_back(kBosId);
        for (int64_t id : encode_bytes(assemble_prompt(rec, shot)))
            prompt_tokens.push_back(id);

        const auto t0 = std::chrono::steady_clock::now();
        std::string pred;
        try {
            pred = decode_bytes(model.generate(prompt_tokens, max_new_tokens));
        } catch (const Error&) {
            ++rep.decode_failures;
            pred.clear();
        }
        const auto t1 = std::chrono::steady_clock::now();
        rep.latencies_s.push_back(
            std::chrono::duration<double>(t1 - t0).count());
        rep.predictions.push_back(std::move(pred));
    }

    rep.metrics = evaluate(rep.predictions, golds);
    if (!rep.latencies_s.empty())
        rep.mean_latency_s =
            std::accumulate(rep.latencies_s.begin(), rep.latencies_s.end(),
                            0.0) /
            static_cast<double>(rep.latencies_s.size());
    return rep;
}

}  // namespace loft
