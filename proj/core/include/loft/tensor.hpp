#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loft/rng.hpp"

namespace loft {

// Precision last applied to the values. Storage is always FP64; the tag
// records which value set the elements belong to.
enum class Precision : uint8_t { fp64 = 0, fp32 = 1, bf16 = 2 };

const char* precision_name(Precision p);

// Dense row-major FP64 array. Values are immutable by convention once a
// tensor is handed to another component; all arithmetic below returns fresh
// tensors and accumulates in FP64 with a fixed left-to-right order.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);  // zero-filled
    Tensor(std::vector<int64_t> shape, std::vector<double> data,
           Precision tag = Precision::fp64);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor identity(int64_t n);
    static Tensor gaussian(std::vector<int64_t> shape, Rng& rng, double mean,
                           double stddev);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }

    // 2-D accessors; ShapeError when the tensor is not 2-D.
    int64_t rows() const;
    int64_t cols() const;
    double at(int64_t i, int64_t j) const;
    double& at(int64_t i, int64_t j);

    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    Precision precision() const { return tag_; }
    void set_precision(Precision tag) { tag_ = tag; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
    Precision tag_ = Precision::fp64;
};

std::string shape_str(std::span<const int64_t> shape);

// ---- arithmetic --------------------------------------------------------

// Standard matrix product, FP64 accumulation, summation over k strictly
// left to right.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
double sum(const Tensor& a);   // left-to-right
double mean(const Tensor& a);

// Row-wise softmax over the last dimension of a 2-D tensor.
Tensor softmax_rows(const Tensor& a);

// Columns [c0, c1) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);
// Column-wise concatenation of 2-D tensors with equal row counts.
Tensor concat_cols(const std::vector<Tensor>& parts);

// Round every element; the result carries the matching precision tag.
Tensor round_bf16(const Tensor& t);
Tensor round_fp32(const Tensor& t);

}  // namespace loft
