#include "loft/parallel.hpp"

#include <algorithm>
#include <chrono>

#include "loft/errors.hpp"

namespace loft {

std::vector<std::pair<int64_t, int64_t>> shard_ranges(int64_t n, int64_t k) {
    if (k < 1) throw ShardError("worker count must be positive");
    if (n < k)
        throw ShardError("cannot shard " + std::to_string(n) +
                         " examples over " + std::to_string(k) + " workers");
    const int64_t base = n / k;
    const int64_t rem = n % k;
    std::vector<std::pair<int64_t, int64_t>> out;
    int64_t at = 0;
    for (int64_t i = 0; i < k; ++i) {
        const int64_t size = base + (i < rem ? 1 : 0);
        out.emplace_back(at, at + size);
        at += size;
    }
    return out;
}

Tensor allreduce_mean(const std::vector<Tensor>& grads,
                      const std::vector<double>& weights) {
    if (grads.empty() || grads.size() != weights.size())
        throw ProtocolError("allreduce needs one weight per gradient");
    if (grads.size() == 1) return grads[0];
    for (const Tensor& g : grads)
        if (!g.same_shape(grads[0]))
            throw ProtocolError("allreduce shape mismatch: " +
                                grads[0].shape_str() + " vs " + g.shape_str());
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    Tensor out = Tensor::zeros(grads[0].shape());
    for (size_t w = 0; w < grads.size(); ++w)
        for (int64_t i = 0; i < out.numel(); ++i)
            out[i] += weights[w] * grads[w][i];
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= wsum;
    return out;
}

uint64_t WorkerGroup::bits_transmitted() const {
    uint64_t total = 0;
    for (const ZeroOneAdam& o : zoa_opts) total += o.bits_transmitted();
    return total;
}

int64_t WorkerGroup::step_count() const {
    if (kind == OptimKind::adam)
        return adam_opts.empty() ? 0 : adam_opts[0].step_count();
    return zoa_opts.empty() ? 0 : zoa_opts[0].step_count();
}

WorkerGroup make_worker_group(const ToyModel& model, int64_t k, OptimKind kind,
                              AdamConfig cfg, int64_t freeze_step) {
    if (k < 1) throw ConfigError("worker count must be positive");
    WorkerGroup g;
    g.k = k;
    g.kind = kind;
    for (int64_t w = 0; w < k; ++w) g.replicas.push_back(model);
    for (int64_t w = 0; w < k; ++w) {
        const std::vector<const Tensor*> params =
            std::as_const(g.replicas[static_cast<size_t>(w)]).trainable_params();
        std::vector<std::string> names =
            g.replicas[static_cast<size_t>(w)].trainable_names();
        if (kind == OptimKind::adam)
            g.adam_opts.emplace_back(cfg, params, std::move(names));
        else
            g.zoa_opts.emplace_back(cfg, freeze_step, params, std::move(names));
    }
    return g;
}

namespace {

// Shard-mean gradients and mean loss from one replica, one example at a
// time; the tape is rebuilt per example so sequences need no padding.
struct LocalResult {
    std::vector<Tensor> grads;
    double loss_sum = 0.0;
};

LocalResult local_forward_backward(ToyModel& replica,
                                   const std::vector<TrainExample>& shard,
                                   int64_t global_offset,
                                   uint64_t dropout_seed) {
    LocalResult res;
    for (const Tensor* p : std::as_const(replica).trainable_params())
        res.grads.push_back(Tensor::zeros(p->shape()));
    for (size_t e = 0; e < shard.size(); ++e) {
        const uint64_t gi = static_cast<uint64_t>(global_offset) + e;
        Rng ex_rng(derive_seed(dropout_seed, gi));
        LossGraph graph = replica.loss_train(shard[e], ex_rng);
        graph.tape->backward(graph.loss);
        res.loss_sum += graph.tape->value(graph.loss)[0];
        for (size_t i = 0; i < graph.params.size(); ++i) {
            const Tensor& g = graph.tape->grad(graph.params[i]);
            for (int64_t j = 0; j < g.numel(); ++j) res.grads[i][j] += g[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(shard.size());
    for (Tensor& g : res.grads)
        for (int64_t j = 0; j < g.numel(); ++j) g[j] *= inv;
    return res;
}

}  // namespace

double ddp_step(WorkerGroup& group, const std::vector<TrainExample>& batch,
                uint64_t dropout_seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const int64_t k = group.k;
    const auto ranges = shard_ranges(static_cast<int64_t>(batch.size()), k);

    std::vector<LocalResult> local;
    std::vector<double> weights;
    for (int64_t w = 0; w < k; ++w) {
        const auto [b, e] = ranges[static_cast<size_t>(w)];
        std::vector<TrainExample> shard(batch.begin() + b, batch.begin() + e);
        local.push_back(local_forward_backward(
            group.replicas[static_cast<size_t>(w)], shard, b, dropout_seed));
        weights.push_back(static_cast<double>(e - b));
    }

    const size_t n_params = local[0].grads.size();
    const bool frozen =
        group.kind == OptimKind::zero_one_adam &&
        group.zoa_opts[0].phase() == OptimPhase::frozen;
    if (group.kind == OptimKind::zero_one_adam) {
        for (const ZeroOneAdam& o : group.zoa_opts)
            if (o.phase() != group.zoa_opts[0].phase() ||
                o.step_count() != group.zoa_opts[0].step_count())
                throw ProtocolError("workers disagree on optimizer phase/step");
    }

    if (!frozen) {
        std::vector<Tensor> reduced;
        for (size_t i = 0; i < n_params; ++i) {
            std::vector<Tensor> contrib;
            for (int64_t w = 0; w < k; ++w)
                contrib.push_back(local[static_cast<size_t>(w)].grads[i]);
            reduced.push_back(allreduce_mean(contrib, weights));
            group.allreduce_bytes +=
                static_cast<uint64_t>(k) *
                static_cast<uint64_t>(reduced.back().numel()) * 8;
        }
        std::vector<const Tensor*> gptr;
        for (const Tensor& g : reduced) gptr.push_back(&g);
        for (int64_t w = 0; w < k; ++w) {
            std::vector<Tensor*> params =
                group.replicas[static_cast<size_t>(w)].trainable_params();
            if (group.kind == OptimKind::adam)
                group.adam_opts[static_cast<size_t>(w)].step(params, gptr);
            else
                group.zoa_opts[static_cast<size_t>(w)].step_warmup(params, gptr);
        }
    } else {
        std::vector<OneBitPacket> uplinks;
        for (int64_t w = 0; w < k; ++w) {
            std::vector<const Tensor*> gptr;
            for (const Tensor& g : local[static_cast<size_t>(w)].grads)
                gptr.push_back(&g);
            uplinks.push_back(
                group.zoa_opts[static_cast<size_t>(w)].frozen_pack(gptr));
        }
        const OneBitPacket broadcast =
            group.zoa_opts[0].server_reduce(uplinks, weights);
        for (int64_t w = 0; w < k; ++w) {
            std::vector<Tensor*> params =
                group.replicas[static_cast<size_t>(w)].trainable_params();
            group.zoa_opts[static_cast<size_t>(w)].frozen_apply(params,
                                                                broadcast);
        }
    }

    for (ToyModel& m : group.replicas) m.refresh_caches();
    const uint64_t h0 = group.replicas[0].trainable_hash();
    for (const ToyModel& m : group.replicas)
        if (m.trainable_hash() != h0)
            throw SyncError("replica adapters diverged after step " +
                            std::to_string(group.step_count()));

    double loss = 0.0;
    for (const LocalResult& r : local) loss += r.loss_sum;
    loss /= static_cast<double>(batch.size());

    const auto t1 = std::chrono::steady_clock::now();
    group.worker_seconds +=
        std::chrono::duration<double>(t1 - t0).count() * static_cast<double>(k);
    return loss;
}

// ---- pipeline-parallel inference ---------------------------------------

PipelinePlan plan_pipeline(int64_t n_layers, int64_t k) {
    if (k < 1) throw PartitionError("stage count must be positive");
    if (k > n_layers)
        throw PartitionError("cannot split " + std::to_string(n_layers) +
                             " layers into " + std::to_string(k) + " stages");
    PipelinePlan plan;
    const int64_t base = n_layers / k;
    const int64_t rem = n_layers % k;
    int64_t at = 0;
    for (int64_t s = 0; s < k; ++s) {
        const int64_t size = base + (s < rem ? 1 : 0);
        plan.stages.emplace_back(at, at + size);
        at += size;
    }
    return plan;
}

std::vector<ScheduleEntry> pipeline_schedule(int64_t m, int64_t k) {
    if (m < 1 || k < 1)
        throw DomainError("schedule needs at least one micro-batch and stage");
    std::vector<ScheduleEntry> out;
    for (int64_t tick = 0; tick < m + k - 1; ++tick)
        for (int64_t s = 0; s < k; ++s) {
            const int64_t j = tick - s;
            if (j >= 0 && j < m) out.push_back({tick, s, j});
        }
    return out;
}

std::vector<Tensor> pipeline_forward(const ToyModel& model,
                                     const PipelinePlan& plan,
                                     const std::vector<std::vector<int64_t>>& batch,
                                     PipelineReport* report) {
    const int64_t k = static_cast<int64_t>(plan.stages.size());
    if (k < 1) throw PartitionError("plan has no stages");
    int64_t expect = 0;
    for (const auto& [b, e] : plan.stages) {
        if (b != expect || e <= b)
            throw PartitionError("plan stages must be contiguous and non-empty");
        expect = e;
    }
    if (expect != model.arch.n_layers)
        throw PartitionError("plan covers " + std::to_string(expect) +
                             " layers, model has " +
                             std::to_string(model.arch.n_layers));
    const int64_t m = static_cast<int64_t>(batch.size());
    if (plan.micro_batches != m)
        throw PartitionError("plan expects " +
                             std::to_string(plan.micro_batches) +
                             " micro-batches, batch has " + std::to_string(m));

    PipelineReport rep;
    rep.busy_ticks.assign(static_cast<size_t>(k), 0);
    rep.peak_activations.assign(static_cast<size_t>(k), 0);

    std::vector<Tensor> inflight(static_cast<size_t>(m));
    std::vector<Tensor> logits(static_cast<size_t>(m));
    for (const ScheduleEntry& entry : pipeline_schedule(m, k)) {
        const auto [b, e] = plan.stages[static_cast<size_t>(entry.stage)];
        const std::vector<int64_t>& tokens =
            batch[static_cast<size_t>(entry.micro_batch)];
        Tensor x = entry.stage == 0
                       ? model.eval_embed(tokens)
                       : inflight[static_cast<size_t>(entry.micro_batch)];
        int64_t resident = x.numel();
        for (int64_t li = b; li < e; ++li) {
            x = model.eval_layer(li, x);
            resident += x.numel();
        }
        if (entry.stage == k - 1) {
            Tensor out = model.eval_head(x);
            resident += out.numel();
            logits[static_cast<size_t>(entry.micro_batch)] = std::move(out);
        } else {
            inflight[static_cast<size_t>(entry.micro_batch)] = std::move(x);
        }
        rep.busy_ticks[static_cast<size_t>(entry.stage)] += 1;
        rep.peak_activations[static_cast<size_t>(entry.stage)] =
            std::max(rep.peak_activations[static_cast<size_t>(entry.stage)],
                     resident);
        rep.makespan = std::max(rep.makespan, entry.tick + 1);
    }
    if (report) *report = rep;
    return logits;
}

std::vector<int64_t> generate_pipelined(const ToyModel& model, int64_t stages,
                                        const std::vector<int64_t>& prompt,
                                        int64_t max_new) {
    PipelinePlan plan = plan_pipeline(model.arch.n_layers, stages);
    plan.micro_batches = 1;
    std::vector<int64_t> ids = prompt;
    std::vector<int64_t> out;
    for (int64_t step = 0; step < max_new; ++step) {
        if (static_cast<int64_t>(ids.size()) >= model.arch.max_seq) break;
        Tensor logits = pipeline_forward(model, plan, {ids})[0];
        const int64_t last = logits.rows() - 1;
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

}  // namespace loft
