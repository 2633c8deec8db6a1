#include "loft/lora.hpp"

#include "loft/errors.hpp"

namespace loft {

LoraAdapter init_adapter(int64_t n_in, int64_t n_out, int64_t r, double alpha,
                         double dropout_p, Rng& rng, std::string name) {
    if (n_in < 1 || n_out < 1)
        throw RankError("adapter dims must be positive, got " +
                        std::to_string(n_in) + "x" + std::to_string(n_out));
    if (r < 1 || r > std::min(n_in, n_out))
        throw RankError("rank " + std::to_string(r) + " outside [1, " +
                        std::to_string(std::min(n_in, n_out)) + "] for " +
                        std::to_string(n_in) + "->" + std::to_string(n_out));
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw ConfigError("adapter dropout " + std::to_string(dropout_p) +
                          " outside [0, 1)");
    LoraAdapter a;
    a.A = Tensor::gaussian({r, n_in}, rng, 0.0, 0.02);
    a.B = Tensor::zeros({n_out, r});
    a.r = r;
    a.alpha = alpha;
    a.dropout_p = dropout_p;
    a.name = std::move(name);
    return a;
}

AdaptedLinear make_adapted_linear(const Tensor& w0, const QuantConfig& cfg,
                                  std::vector<LoraAdapter> adapters) {
    AdaptedLinear lin;
    lin.base = quantize(w0, cfg);
    lin.adapters = std::move(adapters);
    for (const LoraAdapter& a : lin.adapters) {
        if (a.n_in() != w0.cols() || a.n_out() != w0.rows())
            throw ShapeError("adapter " + std::to_string(a.n_in()) + "->" +
                             std::to_string(a.n_out()) +
                             " incompatible with base " + w0.shape_str());
    }
    lin.refresh_cache();
    return lin;
}

namespace {

Tensor adapter_input(const Tensor& x, double p, bool train, Rng* rng) {
    if (!train || p == 0.0) return x;
    if (!rng)
        throw DomainError("train-mode dropout requires an rng");
    double keep_scale = 1.0 / (1.0 - p);
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i)
        out[i] = (rng->next_double() < p) ? 0.0 : x[i] * keep_scale;
    return out;
}

}  // namespace

Tensor lora_forward(const AdaptedLinear& lin, const Tensor& x, bool train,
                    Rng* rng) {
    if (x.cols() != lin.n_in())
        throw ShapeError("input " + x.shape_str() + " incompatible with base " +
                         shape_str(lin.base.shape));
    Tensor y = matmul(x, lin.base_dense_t);
    for (const LoraAdapter& a : lin.adapters) {
        Tensor xa = adapter_input(x, a.dropout_p, train, rng);
        Tensor h = matmul(xa, transpose(a.A));           // [rows, r]
        Tensor delta = matmul(h, transpose(a.B));        // [rows, n_out]
        y = add(y, scale(delta, a.alpha / static_cast<double>(a.r)));
    }
    return y;
}

Tensor merge(const Tensor& w0_dense, const LoraAdapter& adapter) {
    if (w0_dense.rows() != adapter.n_out() || w0_dense.cols() != adapter.n_in())
        throw ShapeError("merge base " + w0_dense.shape_str() +
                         " incompatible with adapter " +
                         std::to_string(adapter.n_in()) + "->" +
                         std::to_string(adapter.n_out()));
    Tensor delta = matmul(adapter.B, adapter.A);
    return add(w0_dense, scale(delta, adapter.alpha /
                                          static_cast<double>(adapter.r)));
}

int64_t adapter_param_count(
    const std::vector<std::pair<int64_t, int64_t>>& dims, int64_t r) {
    int64_t total = 0;
    for (const auto& [n_in, n_out] : dims) total += r * (n_in + n_out);
    return total;
}

}  // namespace loft
