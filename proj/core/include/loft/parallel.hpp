#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "loft/model.hpp"
#include "loft/optim.hpp"

namespace loft {

// ---- data-parallel training --------------------------------------------

// Contiguous [begin, end) index ranges, sizes differing by at most one,
// remainder spread over the earliest shards. n < k is a sharding error.
std::vector<std::pair<int64_t, int64_t>> shard_ranges(int64_t n, int64_t k);

template <typename T>
std::vector<std::vector<T>> shard_batch(const std::vector<T>& batch,
                                        int64_t k) {
    std::vector<std::vector<T>> out;
    for (auto [b, e] : shard_ranges(static_cast<int64_t>(batch.size()), k))
        out.emplace_back(batch.begin() + b, batch.begin() + e);
    return out;
}

// Weighted elementwise mean, accumulated in worker index order. Every
// worker receives the same result tensor. Unit weights give the plain
// mean; k = 1 returns the input unchanged.
Tensor allreduce_mean(const std::vector<Tensor>& grads,
                      const std::vector<double>& weights);

enum class OptimKind : uint8_t { adam = 0, zero_one_adam = 1 };

// k model replicas with one optimizer each, stepped in lockstep. The
// replicas start as copies of one model and every synchronized step leaves
// them bitwise identical; a divergence of the adapter hash is an error.
struct WorkerGroup {
    int64_t k = 1;
    OptimKind kind = OptimKind::adam;
    std::vector<ToyModel> replicas;
    std::vector<Adam> adam_opts;
    std::vector<ZeroOneAdam> zoa_opts;
    uint64_t allreduce_bytes = 0;  // gradient allreduce traffic, warmup/Adam
    double worker_seconds = 0.0;   // wall seconds x k, accumulated per step

    uint64_t bits_transmitted() const;  // sum of compressed uplink bits
    int64_t step_count() const;
};

WorkerGroup make_worker_group(const ToyModel& model, int64_t k, OptimKind kind,
                              AdamConfig cfg, int64_t freeze_step);

// One synchronized training step over the global batch: shard, per-example
// forward/backward on each replica, gradient exchange (averaged raw in the
// warmup/Adam path, 1-bit compressed momentum in the frozen path), and the
// identical update on every replica. Dropout randomness is derived from
// (dropout_seed, global example index) so results do not depend on k.
// Returns the batch mean loss.
double ddp_step(WorkerGroup& group, const std::vector<TrainExample>& batch,
                uint64_t dropout_seed);

// ---- pipeline-parallel inference ---------------------------------------

struct PipelinePlan {
    std::vector<std::pair<int64_t, int64_t>> stages;  // [begin, end) layers
    int64_t micro_batches = 1;
};

// Balanced contiguous layer partition; remainder layers go to the earliest
// stages. k > n_layers is a partition error.
PipelinePlan plan_pipeline(int64_t n_layers, int64_t k);

struct ScheduleEntry {
    int64_t tick;
    int64_t stage;
    int64_t micro_batch;
};

// Fill-drain forward schedule: stage s runs micro-batch j at tick s + j,
// finishing after m + k - 1 ticks. Entries are ordered by tick, then stage.
std::vector<ScheduleEntry> pipeline_schedule(int64_t m, int64_t k);

struct PipelineReport {
    std::vector<int64_t> busy_ticks;        // per stage
    std::vector<int64_t> peak_activations;  // per stage, elements resident
    int64_t makespan = 0;
};

// Runs the schedule over one sequence per micro-batch. Stage 0 embeds, the
// last stage applies the output head; logits match the plain forward pass
// bitwise because both paths run the same layer code.
std::vector<Tensor> pipeline_forward(const ToyModel& model,
                                     const PipelinePlan& plan,
                                     const std::vector<std::vector<int64_t>>& batch,
                                     PipelineReport* report = nullptr);

// Greedy decoding with every forward pass run through the staged pipeline.
// Matches ToyModel::generate token for token.
std::vector<int64_t> generate_pipelined(const ToyModel& model, int64_t stages,
                                        const std::vector<int64_t>& prompt,
                                        int64_t max_new);

}  // namespace loft
