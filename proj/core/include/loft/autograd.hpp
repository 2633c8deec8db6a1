#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "loft/rng.hpp"
#include "loft/tensor.hpp"

namespace loft {

// ---- op value kernels --------------------------------------------------
// Shared by the tape (forward values) and by the plain inference path, so
// both paths produce bitwise-identical values for the same inputs.

Tensor silu_value(const Tensor& x);
// y[t,i] = x[t,i] * inv_rms[t] * gain[i]; inv_rms[t] = 1/sqrt(mean_i x² + eps).
// inv_rms_out, when non-null, receives one value per row.
Tensor rmsnorm_rows_value(const Tensor& x, const Tensor& gain, double eps,
                          Tensor* inv_rms_out = nullptr);
// Row-wise softmax with positions j > i forced to zero probability.
Tensor causal_softmax_rows_value(const Tensor& x);
// Mean negative log-likelihood over rows with active[t] != 0.
// probs_out, when non-null, receives the full softmax matrix.
double cross_entropy_rows_value(const Tensor& logits,
                                const std::vector<int64_t>& targets,
                                const std::vector<uint8_t>& active,
                                Tensor* probs_out = nullptr);

// ---- reverse-mode tape -------------------------------------------------

enum class OpKind : uint8_t {
    Leaf,
    MatMul,
    Add,
    Mul,
    ScaleOp,
    Transpose,
    Silu,
    RmsNormRows,
    SoftmaxRows,
    CausalSoftmaxRows,
    Dropout,
    SliceCols,
    ConcatCols,
    SumAll,
    MeanAll,
    CrossEntropyRows,
};

class Tape;

// Handle into a tape; valid while the tape lives.
class Var {
public:
    Var() = default;
    int32_t id() const { return id_; }
    const Tensor& value() const;
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, int32_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int32_t id_ = -1;
};

// Records a computation as it runs; backward() then fills gradients for
// every node that requires them. Nodes are append-only, so reverse node
// order is a valid topological order for backpropagation.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // frozen marks a leaf whose gradient must never be requested.
    Var leaf(Tensor value, bool requires_grad, bool frozen = false,
             std::string name = {});

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var transpose(Var a);
    Var silu(Var a);
    Var rmsnorm_rows(Var x, Var gain, double eps);
    Var softmax_rows(Var a);
    Var causal_softmax_rows(Var a);
    // Inverted dropout; identity when train is false or p == 0.
    Var dropout(Var a, double p, Rng& rng, bool train);
    Var slice_cols(Var a, int64_t c0, int64_t c1);
    Var concat_cols(const std::vector<Var>& parts);
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var cross_entropy_rows(Var logits, std::vector<int64_t> targets,
                           std::vector<uint8_t> active);

    // Seeds d(loss) = 1 and backpropagates. loss must be scalar-shaped.
    void backward(Var loss);

    // Gradient of the last backward() wrt v. Frozen leaves throw
    // FrozenParamError; nodes that never required gradients throw DomainError.
    const Tensor& grad(Var v) const;

    const Tensor& value(Var v) const;
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        OpKind op = OpKind::Leaf;
        std::array<int32_t, 2> in{-1, -1};
        std::vector<int32_t> extra_in;  // ConcatCols only
        Tensor value;
        Tensor grad;  // empty until first accumulation
        bool requires_grad = false;
        bool frozen = false;
        double scalar = 0.0;  // ScaleOp factor / RmsNormRows eps
        Tensor aux;           // Dropout mask / RmsNormRows inv_rms / CE probs
        std::vector<int64_t> targets;
        std::vector<uint8_t> active;
        int64_t c0 = 0, c1 = 0;  // SliceCols range
        std::string name;
    };

    friend class Var;

    Var push(Node node);
    Node& at(Var v);
    const Node& at(Var v) const;
    void accumulate(int32_t id, const Tensor& delta);

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace loft
