#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loft/tensor.hpp"

namespace loft {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update for a single parameter tensor. t is the
// 1-based step count. Both optimizers below route every warmup update
// through this function, which is what makes their warmup trajectories
// bitwise identical.
void adam_apply(const AdamConfig& cfg, int64_t t, Tensor& p, const Tensor& g,
                Tensor& m, Tensor& v);

class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<const Tensor*>& params,
         std::vector<std::string> names);

    void step(const std::vector<Tensor*>& params,
              const std::vector<const Tensor*>& grads);

    int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    const Tensor& m(size_t i) const { return m_[i]; }
    const Tensor& v(size_t i) const { return v_[i]; }

private:
    AdamConfig cfg_;
    int64_t step_ = 0;
    std::vector<Tensor> m_, v_;
    std::vector<std::string> names_;
};

// Sign-compressed tensor: one bit per element plus a single FP64 scale.
// Payload size is n + 64 bits; `step` is control-plane metadata used for
// protocol checks and is not part of the payload.
struct OneBitPacket {
    std::vector<uint8_t> sign_bits;  // bit i of byte i/8, LSB first; 1 = positive
    double scale = 0.0;
    int64_t n = 0;
    int64_t step = 0;

    double sign(int64_t i) const;
    std::vector<double> decode() const;  // scale * sign per element
    uint64_t payload_bits() const { return static_cast<uint64_t>(n) + 64; }
};

// c = u + residual; scale = mean(|c|); transmitted = scale * sign(c) with
// sign(0) = +1; residual is rewritten to c - transmitted. Conservation
// (transmitted + new residual = u + old residual) is an identity in real
// arithmetic; in FP64 the subtraction can round when |c| is far from the
// scale, so callers must not rely on it bitwise.
OneBitPacket compress_1bit(std::span<const double> u,
                           std::vector<double>& residual);

enum class OptimPhase : uint8_t { warmup = 0, frozen = 1 };

const char* phase_name(OptimPhase p);

// Adam for `freeze_step` warmup steps, then: the second moment is frozen at
// its warmup-final value and momentum is the only quantity exchanged, as a
// 1-bit sign packet with error feedback kept on both the worker and the
// server side. Each instance belongs to one worker; cross-worker exchange
// happens through the pack / reduce / apply methods, which the training
// driver sequences as a blocking collective (all workers pack, one worker
// hosts the reduce, every worker applies the same broadcast packet).
class ZeroOneAdam {
public:
    ZeroOneAdam(AdamConfig cfg, int64_t freeze_step,
                const std::vector<const Tensor*>& params,
                std::vector<std::string> names);

    // Warmup path. Gradients must already be averaged across workers, so
    // that every replica performs the same update. Takes the variance
    // snapshot and flips the phase when the counter reaches freeze_step.
    void step_warmup(const std::vector<Tensor*>& params,
                     const std::vector<const Tensor*>& grads);

    // Frozen path, worker side: blend the local gradient into the synced
    // momentum and compress the candidate against this worker's residual.
    // Counts the packet's payload bits as transmitted.
    OneBitPacket frozen_pack(const std::vector<const Tensor*>& local_grads);

    // Frozen path, server side: weighted mean of the decoded uplinks,
    // recompressed against the server residual. Hosted on one worker.
    OneBitPacket server_reduce(const std::vector<OneBitPacket>& uplinks,
                               const std::vector<double>& weights);

    // Frozen path, worker side: adopt the broadcast momentum and update the
    // parameters against the frozen variance.
    void frozen_apply(const std::vector<Tensor*>& params,
                      const OneBitPacket& broadcast);

    OptimPhase phase() const { return phase_; }
    int64_t step_count() const { return step_; }
    int64_t freeze_step() const { return freeze_step_; }
    int64_t numel() const { return numel_; }
    uint64_t bits_transmitted() const { return bits_; }
    const AdamConfig& config() const { return cfg_; }
    const Tensor& v(size_t i) const { return v_[i]; }
    const Tensor& v_frozen(size_t i) const { return v_frozen_[i]; }
    uint64_t v_hash() const;

private:
    void check_param_list(size_t n_params, size_t n_tensors) const;

    AdamConfig cfg_;
    int64_t freeze_step_;
    int64_t step_ = 0;
    OptimPhase phase_ = OptimPhase::warmup;
    int64_t numel_ = 0;
    uint64_t bits_ = 0;
    double bc2_frozen_ = 1.0;
    std::vector<Tensor> m_, v_, v_frozen_;
    std::vector<double> residual_local_, residual_server_;
    std::vector<std::string> names_;
};

}  // namespace loft
