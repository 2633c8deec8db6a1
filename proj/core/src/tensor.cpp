#include "loft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "loft/bf16.hpp"
#include "loft/errors.hpp"

namespace loft {

const char* precision_name(Precision p) {
    switch (p) {
        case Precision::fp64: return "fp64";
        case Precision::fp32: return "fp32";
        case Precision::bf16: return "bf16";
    }
    return "unknown";
}

namespace {

int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0)
            throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data, Precision tag)
    : shape_(std::move(shape)), data_(std::move(data)), tag_(tag) {
    int64_t n = checked_numel(shape_);
    if (n != static_cast<int64_t>(data_.size()))
        throw ShapeError("data size " + std::to_string(data_.size()) +
                         " does not match shape " + loft::shape_str(shape_));
}

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::gaussian(std::vector<int64_t> shape, Rng& rng, double mean,
                        double stddev) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = mean + stddev * rng.next_gaussian();
    return t;
}

int64_t Tensor::rows() const {
    if (shape_.size() != 2)
        throw ShapeError("expected 2-D tensor, got shape " + loft::shape_str(shape_));
    return shape_[0];
}

int64_t Tensor::cols() const {
    if (shape_.size() != 2)
        throw ShapeError("expected 2-D tensor, got shape " + loft::shape_str(shape_));
    return shape_[1];
}

double Tensor::at(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * cols() + j)];
}

double& Tensor::at(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * cols() + j)];
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const { return loft::shape_str(shape_); }

std::string shape_str(std::span<const int64_t> shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
        throw ShapeError("matmul shape mismatch: " + a.shape_str() + " x " +
                         b.shape_str());
    int64_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    int64_t m = a.rows(), n = a.cols();
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + " shape mismatch: " + a.shape_str() +
                         " vs " + b.shape_str());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

double sum(const Tensor& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
    return acc;
}

double mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return sum(a) / static_cast<double>(a.numel());
}

Tensor softmax_rows(const Tensor& a) {
    int64_t m = a.rows(), n = a.cols();
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        double mx = a.at(i, 0);
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double e = std::exp(a.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int64_t j = 0; j < n; ++j) out.at(i, j) /= denom;
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw ShapeError("column slice [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") outside width " +
                         std::to_string(a.cols()));
    Tensor out({a.rows(), c1 - c0});
    for (int64_t i = 0; i < a.rows(); ++i)
        for (int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = a.at(i, j);
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    int64_t rows = parts[0].rows();
    int64_t width = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != rows)
            throw ShapeError("concat row mismatch: " + std::to_string(rows) +
                             " vs " + std::to_string(p.rows()));
        width += p.cols();
    }
    Tensor out({rows, width});
    int64_t off = 0;
    for (const Tensor& p : parts) {
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
        off += p.cols();
    }
    return out;
}

Tensor round_bf16(const Tensor& t) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) out[i] = round_bf16_scalar(t[i]);
    out.set_precision(Precision::bf16);
    return out;
}

Tensor round_fp32(const Tensor& t) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) out[i] = round_fp32_scalar(t[i]);
    out.set_precision(Precision::fp32);
    return out;
}

}  // namespace loft
