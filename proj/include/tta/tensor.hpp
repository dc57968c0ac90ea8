// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tta {

// Dense row-major tensor of 64-bit floats, rank 0..2. Rank 0 is a scalar
// (numel 1), rank 1 a vector, rank 2 a matrix.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);
    static Tensor mat(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor zeros_like(const Tensor& t);
    static Tensor filled(std::vector<std::size_t> shape, double v);

    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double value() const;  // single-element accessor

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    bool empty() const { return data_.empty() && shape_.empty(); }
    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::size_t cols_ = 0;  // cached for rank-2 indexing
    std::vector<double> data_;
};

// Elementwise and small-BLAS helpers. Shape mismatches throw DimensionError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double squared_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// log(sum(exp(v))) with max-subtraction; empty input throws DimensionError.
double logsumexp(const Tensor& v);
Tensor softmax(const Tensor& v);
Tensor softmax_rows(const Tensor& m);
Tensor logsumexp_rows(const Tensor& m);  // rank-2 -> rank-1
std::size_t argmax(const Tensor& v);
Tensor one_hot(std::size_t index, std::size_t k);

// Shannon entropy of a probability vector, with the 0*log(0) = 0 convention.
double shannon_entropy(const Tensor& probs);

double sigmoid(double z);

}  // namespace tta
