#include "loft/autograd.hpp"

#include <cmath>

#include "loft/errors.hpp"

namespace loft {

// ---- value kernels -----------------------------------------------------

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor silu_value(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * sigmoid(x[i]);
    return out;
}

Tensor rmsnorm_rows_value(const Tensor& x, const Tensor& gain, double eps,
                          Tensor* inv_rms_out) {
    int64_t m = x.rows(), d = x.cols();
    if (gain.numel() != d)
        throw ShapeError("rmsnorm gain length " + std::to_string(gain.numel()) +
                         " does not match row width " + std::to_string(d));
    Tensor out({m, d});
    Tensor inv_rms({m});
    for (int64_t t = 0; t < m; ++t) {
        double ss = 0.0;
        for (int64_t i = 0; i < d; ++i) ss += x.at(t, i) * x.at(t, i);
        double r = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        inv_rms[t] = r;
        for (int64_t i = 0; i < d; ++i) out.at(t, i) = x.at(t, i) * r * gain[i];
    }
    if (inv_rms_out) *inv_rms_out = std::move(inv_rms);
    return out;
}

Tensor causal_softmax_rows_value(const Tensor& x) {
    int64_t m = x.rows(), n = x.cols();
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        int64_t hi = std::min(i, n - 1);  // admissible columns are j <= i
        double mx = x.at(i, 0);
        for (int64_t j = 1; j <= hi; ++j) mx = std::max(mx, x.at(i, j));
        double denom = 0.0;
        for (int64_t j = 0; j <= hi; ++j) {
            double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int64_t j = 0; j <= hi; ++j) out.at(i, j) /= denom;
        for (int64_t j = hi + 1; j < n; ++j) out.at(i, j) = 0.0;
    }
    return out;
}

double cross_entropy_rows_value(const Tensor& logits,
                                const std::vector<int64_t>& targets,
                                const std::vector<uint8_t>& active,
                                Tensor* probs_out) {
    int64_t m = logits.rows(), v = logits.cols();
    if (static_cast<int64_t>(targets.size()) != m ||
        static_cast<int64_t>(active.size()) != m)
        throw ShapeError("cross-entropy targets/active length " +
                         std::to_string(targets.size()) + "/" +
                         std::to_string(active.size()) + " vs " +
                         std::to_string(m) + " rows");
    int64_t n_active = 0;
    for (uint8_t a : active) n_active += (a != 0);
    if (n_active == 0) throw DomainError("cross-entropy with no active rows");

    Tensor probs({m, v});
    double total = 0.0;
    for (int64_t t = 0; t < m; ++t) {
        int64_t tgt = targets[static_cast<size_t>(t)];
        if (tgt < 0 || tgt >= v)
            throw DomainError("cross-entropy target " + std::to_string(tgt) +
                              " outside vocabulary size " + std::to_string(v));
        double mx = logits.at(t, 0);
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, logits.at(t, j));
        double denom = 0.0;
        for (int64_t j = 0; j < v; ++j) {
            double e = std::exp(logits.at(t, j) - mx);
            probs.at(t, j) = e;
            denom += e;
        }
        for (int64_t j = 0; j < v; ++j) probs.at(t, j) /= denom;
        if (active[static_cast<size_t>(t)]) {
            double lse = mx + std::log(denom);
            total += lse - logits.at(t, tgt);
        }
    }
    if (probs_out) *probs_out = std::move(probs);
    return total / static_cast<double>(n_active);
}

// ---- Var ---------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->at(*this).requires_grad; }

// ---- Tape --------------------------------------------------------------

Tape::Node& Tape::at(Var v) {
    if (v.tape_ != this || v.id_ < 0 ||
        v.id_ >= static_cast<int32_t>(nodes_.size()))
        throw DomainError("variable does not belong to this tape");
    return nodes_[static_cast<size_t>(v.id_)];
}

const Tape::Node& Tape::at(Var v) const {
    return const_cast<Tape*>(this)->at(v);
}

const Tensor& Tape::value(Var v) const { return at(v).value; }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value, bool requires_grad, bool frozen, std::string name) {
    Node n;
    n.op = OpKind::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad && !frozen;
    n.frozen = frozen;
    n.name = std::move(name);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = OpKind::MatMul;
    n.in = {a.id_, b.id_};
    n.value = loft::matmul(at(a).value, at(b).value);
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    Node n;
    n.op = OpKind::Add;
    n.in = {a.id_, b.id_};
    n.value = loft::add(at(a).value, at(b).value);
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    Node n;
    n.op = OpKind::Mul;
    n.in = {a.id_, b.id_};
    n.value = loft::mul(at(a).value, at(b).value);
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
    Node n;
    n.op = OpKind::ScaleOp;
    n.in = {a.id_, -1};
    n.scalar = s;
    n.value = loft::scale(at(a).value, s);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::transpose(Var a) {
    Node n;
    n.op = OpKind::Transpose;
    n.in = {a.id_, -1};
    n.value = loft::transpose(at(a).value);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::silu(Var a) {
    Node n;
    n.op = OpKind::Silu;
    n.in = {a.id_, -1};
    n.value = silu_value(at(a).value);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::rmsnorm_rows(Var x, Var gain, double eps) {
    Node n;
    n.op = OpKind::RmsNormRows;
    n.in = {x.id_, gain.id_};
    n.scalar = eps;
    n.value = rmsnorm_rows_value(at(x).value, at(gain).value, eps, &n.aux);
    n.requires_grad = at(x).requires_grad || at(gain).requires_grad;
    return push(std::move(n));
}

Var Tape::softmax_rows(Var a) {
    Node n;
    n.op = OpKind::SoftmaxRows;
    n.in = {a.id_, -1};
    n.value = loft::softmax_rows(at(a).value);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::causal_softmax_rows(Var a) {
    Node n;
    n.op = OpKind::CausalSoftmaxRows;
    n.in = {a.id_, -1};
    n.value = causal_softmax_rows_value(at(a).value);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::dropout(Var a, double p, Rng& rng, bool train) {
    if (!train || p == 0.0) return a;
    if (p < 0.0 || p >= 1.0)
        throw DomainError("dropout probability " + std::to_string(p) +
                          " outside [0, 1)");
    Node n;
    n.op = OpKind::Dropout;
    n.in = {a.id_, -1};
    const Tensor& x = at(a).value;
    double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i)
        mask[i] = (rng.next_double() < p) ? 0.0 : keep_scale;
    n.aux = std::move(mask);
    n.value = loft::mul(x, n.aux);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
    Node n;
    n.op = OpKind::SliceCols;
    n.in = {a.id_, -1};
    n.c0 = c0;
    n.c1 = c1;
    n.value = loft::slice_cols(at(a).value, c0, c1);
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    std::vector<Tensor> values;
    values.reserve(parts.size());
    bool req = false;
    Node n;
    n.op = OpKind::ConcatCols;
    for (Var p : parts) {
        values.push_back(at(p).value);
        req = req || at(p).requires_grad;
        n.extra_in.push_back(p.id_);
    }
    n.value = loft::concat_cols(values);
    n.requires_grad = req;
    return push(std::move(n));
}

Var Tape::sum_all(Var a) {
    Node n;
    n.op = OpKind::SumAll;
    n.in = {a.id_, -1};
    n.value = Tensor({1}, {loft::sum(at(a).value)});
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::mean_all(Var a) {
    Node n;
    n.op = OpKind::MeanAll;
    n.in = {a.id_, -1};
    n.value = Tensor({1}, {loft::mean(at(a).value)});
    n.requires_grad = at(a).requires_grad;
    return push(std::move(n));
}

Var Tape::cross_entropy_rows(Var logits, std::vector<int64_t> targets,
                             std::vector<uint8_t> active) {
    Node n;
    n.op = OpKind::CrossEntropyRows;
    n.in = {logits.id_, -1};
    n.targets = std::move(targets);
    n.active = std::move(active);
    double v = cross_entropy_rows_value(at(logits).value, n.targets, n.active,
                                        &n.aux);
    n.value = Tensor({1}, {v});
    n.requires_grad = at(logits).requires_grad;
    return push(std::move(n));
}

void Tape::accumulate(int32_t id, const Tensor& delta) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.numel() == 0) {
        n.grad = delta;
        return;
    }
    for (int64_t i = 0; i < delta.numel(); ++i) n.grad[i] += delta[i];
}

void Tape::backward(Var loss) {
    Node& ln = at(loss);
    if (ln.value.numel() != 1)
        throw ShapeError("backward needs a scalar, got shape " +
                         ln.value.shape_str());
    if (!ln.requires_grad)
        throw DomainError("loss does not depend on any trainable leaf");
    ln.grad = Tensor(ln.value.shape(), {1.0});
    backward_done_ = true;

    for (int32_t id = static_cast<int32_t>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.requires_grad || n.grad.numel() == 0) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case OpKind::Leaf:
                break;
            case OpKind::MatMul: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                if (nodes_[n.in[0]].requires_grad)
                    accumulate(n.in[0], loft::matmul(g, loft::transpose(b)));
                if (nodes_[n.in[1]].requires_grad)
                    accumulate(n.in[1], loft::matmul(loft::transpose(a), g));
                break;
            }
            case OpKind::Add:
                accumulate(n.in[0], g);
                accumulate(n.in[1], g);
                break;
            case OpKind::Mul:
                if (nodes_[n.in[0]].requires_grad)
                    accumulate(n.in[0], loft::mul(g, nodes_[n.in[1]].value));
                if (nodes_[n.in[1]].requires_grad)
                    accumulate(n.in[1], loft::mul(g, nodes_[n.in[0]].value));
                break;
            case OpKind::ScaleOp:
                accumulate(n.in[0], loft::scale(g, n.scalar));
                break;
            case OpKind::Transpose:
                accumulate(n.in[0], loft::transpose(g));
                break;
            case OpKind::Silu: {
                const Tensor& x = nodes_[n.in[0]].value;
                Tensor dx(x.shape());
                for (int64_t i = 0; i < x.numel(); ++i) {
                    double s = sigmoid(x[i]);
                    dx[i] = g[i] * s * (1.0 + x[i] * (1.0 - s));
                }
                accumulate(n.in[0], dx);
                break;
            }
            case OpKind::RmsNormRows: {
                const Tensor& x = nodes_[n.in[0]].value;
                const Tensor& gain = nodes_[n.in[1]].value;
                const Tensor& inv_rms = n.aux;
                int64_t m = x.rows(), d = x.cols();
                if (nodes_[n.in[0]].requires_grad) {
                    Tensor dx({m, d});
                    for (int64_t t = 0; t < m; ++t) {
                        double r = inv_rms[t];
                        double s = 0.0;  // sum_i g_ti * gain_i * x_ti
                        for (int64_t i = 0; i < d; ++i)
                            s += g.at(t, i) * gain[i] * x.at(t, i);
                        double c = r * r * r * s / static_cast<double>(d);
                        for (int64_t i = 0; i < d; ++i)
                            dx.at(t, i) = r * g.at(t, i) * gain[i] - c * x.at(t, i);
                    }
                    accumulate(n.in[0], dx);
                }
                if (nodes_[n.in[1]].requires_grad) {
                    Tensor dg({d});
                    for (int64_t i = 0; i < d; ++i) {
                        double acc = 0.0;
                        for (int64_t t = 0; t < m; ++t)
                            acc += g.at(t, i) * x.at(t, i) * inv_rms[t];
                        dg[i] = acc;
                    }
                    accumulate(n.in[1], dg);
                }
                break;
            }
            case OpKind::SoftmaxRows:
            case OpKind::CausalSoftmaxRows: {
                // Same formula for both: masked entries have y = 0 and
                // contribute nothing.
                const Tensor& y = n.value;
                int64_t m = y.rows(), c = y.cols();
                Tensor dx({m, c});
                for (int64_t i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (int64_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
                    for (int64_t j = 0; j < c; ++j)
                        dx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
                }
                accumulate(n.in[0], dx);
                break;
            }
            case OpKind::Dropout:
                accumulate(n.in[0], loft::mul(g, n.aux));
                break;
            case OpKind::SliceCols: {
                const Tensor& x = nodes_[n.in[0]].value;
                Tensor dx(x.shape());
                for (int64_t i = 0; i < x.rows(); ++i)
                    for (int64_t j = n.c0; j < n.c1; ++j)
                        dx.at(i, j) = g.at(i, j - n.c0);
                accumulate(n.in[0], dx);
                break;
            }
            case OpKind::ConcatCols: {
                int64_t off = 0;
                for (int32_t src : n.extra_in) {
                    const Tensor& part = nodes_[src].value;
                    if (nodes_[src].requires_grad) {
                        Tensor dp({part.rows(), part.cols()});
                        for (int64_t i = 0; i < part.rows(); ++i)
                            for (int64_t j = 0; j < part.cols(); ++j)
                                dp.at(i, j) = g.at(i, off + j);
                        accumulate(src, dp);
                    }
                    off += part.cols();
                }
                break;
            }
            case OpKind::SumAll: {
                const Tensor& x = nodes_[n.in[0]].value;
                accumulate(n.in[0], Tensor::full(x.shape(), g[0]));
                break;
            }
            case OpKind::MeanAll: {
                const Tensor& x = nodes_[n.in[0]].value;
                accumulate(n.in[0],
                           Tensor::full(x.shape(),
                                        g[0] / static_cast<double>(x.numel())));
                break;
            }
            case OpKind::CrossEntropyRows: {
                const Tensor& probs = n.aux;
                int64_t m = probs.rows(), v = probs.cols();
                int64_t n_active = 0;
                for (uint8_t a : n.active) n_active += (a != 0);
                double w = g[0] / static_cast<double>(n_active);
                Tensor dx({m, v});
                for (int64_t t = 0; t < m; ++t) {
                    if (!n.active[static_cast<size_t>(t)]) continue;
                    int64_t tgt = n.targets[static_cast<size_t>(t)];
                    for (int64_t j = 0; j < v; ++j)
                        dx.at(t, j) = w * probs.at(t, j);
                    dx.at(t, tgt) -= w;
                }
                accumulate(n.in[0], dx);
                break;
            }
        }
    }
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = at(v);
    if (n.frozen)
        throw FrozenParamError("gradient requested for frozen parameter" +
                               (n.name.empty() ? std::string()
                                               : " '" + n.name + "'"));
    if (!n.requires_grad)
        throw DomainError("gradient requested for a non-trainable value");
    if (!backward_done_) throw DomainError("backward has not run on this tape");
    if (n.grad.numel() == 0) {
        // Parameter unused by the loss: gradient is a well-defined zero.
        const_cast<Node&>(n).grad = Tensor(n.value.shape());
    }
    return n.grad;
}

}  // namespace loft
