#include "loft/optim.hpp"

#include <cmath>

#include "loft/errors.hpp"
#include "loft/hash.hpp"

namespace loft {

namespace {

void check_finite_grad(const Tensor& g, const std::string& name) {
    if (!g.all_finite())
        throw OptimError("non-finite gradient for parameter " + name);
}

void check_shapes(const Tensor& p, const Tensor& g, const Tensor& m,
                  const std::string& name) {
    if (!p.same_shape(g) || !p.same_shape(m))
        throw ShapeError("optimizer state/gradient shape mismatch for " + name);
}

}  // namespace

void adam_apply(const AdamConfig& cfg, int64_t t, Tensor& p, const Tensor& g,
                Tensor& m, Tensor& v) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Adam::Adam(AdamConfig cfg, const std::vector<const Tensor*>& params,
           std::vector<std::string> names)
    : cfg_(cfg), names_(std::move(names)) {
    if (names_.size() != params.size())
        throw OptimError("parameter/name count mismatch");
    for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->shape()));
        v_.push_back(Tensor::zeros(p->shape()));
    }
}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw OptimError("step called with wrong parameter count");
    ++step_;
    for (size_t i = 0; i < params.size(); ++i) {
        check_shapes(*params[i], *grads[i], m_[i], names_[i]);
        check_finite_grad(*grads[i], names_[i]);
        adam_apply(cfg_, step_, *params[i], *grads[i], m_[i], v_[i]);
    }
}

double OneBitPacket::sign(int64_t i) const {
    const uint8_t byte = sign_bits[static_cast<size_t>(i >> 3)];
    return (byte >> (i & 7)) & 1 ? 1.0 : -1.0;
}

std::vector<double> OneBitPacket::decode() const {
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = scale * sign(i);
    return out;
}

OneBitPacket compress_1bit(std::span<const double> u,
                           std::vector<double>& residual) {
    if (residual.size() != u.size())
        throw ShapeError("compress input and residual sizes differ");
    const int64_t n = static_cast<int64_t>(u.size());
    OneBitPacket pkt;
    pkt.n = n;
    pkt.sign_bits.assign(static_cast<size_t>((n + 7) / 8), 0);

    std::vector<double> c(u.size());
    double sum_abs = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        c[static_cast<size_t>(i)] = u[static_cast<size_t>(i)] +
                                    residual[static_cast<size_t>(i)];
        sum_abs += std::fabs(c[static_cast<size_t>(i)]);
    }
    pkt.scale = n > 0 ? sum_abs / static_cast<double>(n) : 0.0;

    for (int64_t i = 0; i < n; ++i) {
        const double ci = c[static_cast<size_t>(i)];
        const double sg = ci < 0.0 ? -1.0 : 1.0;
        if (sg > 0.0)
            pkt.sign_bits[static_cast<size_t>(i >> 3)] |=
                static_cast<uint8_t>(1u << (i & 7));
        residual[static_cast<size_t>(i)] = ci - pkt.scale * sg;
    }
    return pkt;
}

const char* phase_name(OptimPhase p) {
    return p == OptimPhase::warmup ? "warmup" : "frozen";
}

ZeroOneAdam::ZeroOneAdam(AdamConfig cfg, int64_t freeze_step,
                         const std::vector<const Tensor*>& params,
                         std::vector<std::string> names)
    : cfg_(cfg), freeze_step_(freeze_step), names_(std::move(names)) {
    if (freeze_step_ < 1)
        throw ConfigError("freeze_step must be at least 1");
    if (names_.size() != params.size())
        throw OptimError("parameter/name count mismatch");
    for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->shape()));
        v_.push_back(Tensor::zeros(p->shape()));
        numel_ += p->numel();
    }
    residual_local_.assign(static_cast<size_t>(numel_), 0.0);
    residual_server_.assign(static_cast<size_t>(numel_), 0.0);
}

void ZeroOneAdam::check_param_list(size_t n_params, size_t n_tensors) const {
    if (n_params != m_.size() || n_tensors != m_.size())
        throw OptimError("step called with wrong parameter count");
}

void ZeroOneAdam::step_warmup(const std::vector<Tensor*>& params,
                              const std::vector<const Tensor*>& grads) {
    if (phase_ != OptimPhase::warmup)
        throw ProtocolError("warmup step requested in frozen phase");
    check_param_list(params.size(), grads.size());
    ++step_;
    for (size_t i = 0; i < params.size(); ++i) {
        check_shapes(*params[i], *grads[i], m_[i], names_[i]);
        check_finite_grad(*grads[i], names_[i]);
        adam_apply(cfg_, step_, *params[i], *grads[i], m_[i], v_[i]);
    }
    if (step_ == freeze_step_) {
        v_frozen_ = v_;
        // The variance divisor is pinned here so the step scale is
        // continuous across the phase switch and constant afterwards.
        bc2_frozen_ = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        phase_ = OptimPhase::frozen;
    }
}

OneBitPacket ZeroOneAdam::frozen_pack(
    const std::vector<const Tensor*>& local_grads) {
    if (phase_ != OptimPhase::frozen)
        throw ProtocolError("frozen pack requested in warmup phase");
    check_param_list(local_grads.size(), local_grads.size());

    std::vector<double> cand(static_cast<size_t>(numel_));
    size_t off = 0;
    for (size_t i = 0; i < local_grads.size(); ++i) {
        const Tensor& g = *local_grads[i];
        if (!g.same_shape(m_[i]))
            throw ShapeError("gradient shape mismatch for " + names_[i]);
        check_finite_grad(g, names_[i]);
        for (int64_t j = 0; j < g.numel(); ++j)
            cand[off++] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
    }

    OneBitPacket pkt = compress_1bit(cand, residual_local_);
    pkt.step = step_ + 1;
    bits_ += pkt.payload_bits();
    return pkt;
}

OneBitPacket ZeroOneAdam::server_reduce(
    const std::vector<OneBitPacket>& uplinks,
    const std::vector<double>& weights) {
    if (phase_ != OptimPhase::frozen)
        throw ProtocolError("server reduce requested in warmup phase");
    if (uplinks.empty() || uplinks.size() != weights.size())
        throw ProtocolError("uplink/weight count mismatch");
    for (const OneBitPacket& p : uplinks) {
        if (p.n != numel_)
            throw ProtocolError("uplink size mismatch");
        if (p.step != uplinks[0].step)
            throw ProtocolError("uplink step counters differ across workers");
    }
    if (uplinks[0].step != step_ + 1)
        throw ProtocolError("server reduce out of step");

    double wsum = 0.0;
    for (double w : weights) wsum += w;
    std::vector<double> mean(static_cast<size_t>(numel_), 0.0);
    for (size_t w = 0; w < uplinks.size(); ++w) {
        const std::vector<double> dec = uplinks[w].decode();
        for (int64_t i = 0; i < numel_; ++i)
            mean[static_cast<size_t>(i)] += weights[w] * dec[static_cast<size_t>(i)];
    }
    for (int64_t i = 0; i < numel_; ++i) mean[static_cast<size_t>(i)] /= wsum;

    OneBitPacket out = compress_1bit(mean, residual_server_);
    out.step = uplinks[0].step;
    return out;
}

void ZeroOneAdam::frozen_apply(const std::vector<Tensor*>& params,
                               const OneBitPacket& broadcast) {
    if (phase_ != OptimPhase::frozen)
        throw ProtocolError("frozen apply requested in warmup phase");
    check_param_list(params.size(), params.size());
    if (broadcast.n != numel_)
        throw ProtocolError("broadcast size mismatch");
    if (broadcast.step != step_ + 1)
        throw ProtocolError("broadcast step counter out of order");

    step_ = broadcast.step;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    int64_t off = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (!p.same_shape(m_[i]))
            throw ShapeError("parameter shape mismatch for " + names_[i]);
        for (int64_t j = 0; j < p.numel(); ++j, ++off) {
            m_[i][j] = broadcast.scale * broadcast.sign(off);
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_frozen_[i][j] / bc2_frozen_;
            p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

uint64_t ZeroOneAdam::v_hash() const {
    Fnv1a64 h;
    for (const Tensor& t : v_)
        for (int64_t i = 0; i < t.numel(); ++i) h.update_f64(t[i]);
    for (const Tensor& t : v_frozen_)
        for (int64_t i = 0; i < t.numel(); ++i) h.update_f64(t[i]);
    return h.value();
}

}  // namespace loft
