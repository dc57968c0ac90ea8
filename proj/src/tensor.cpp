// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tta/errors.hpp"

namespace tta {

namespace {
std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw DimensionError("tensor data length does not match shape " + shape_str());
    cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

Tensor Tensor::mat(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape()); }

Tensor Tensor::filled(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_str());
    return shape_[1];
}

double Tensor::value() const {
    if (numel() != 1) throw DimensionError("value() on non-scalar tensor " + shape_str());
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " and " +
                             b.shape_str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a.at(i, l);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(l, j);
        }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: rank-2 required, got " + a.shape_str());
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw DimensionError("dot: length mismatch " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double logsumexp(const Tensor& v) {
    if (v.numel() == 0) throw DimensionError("logsumexp: empty input");
    double mx = v[0];
    for (std::size_t i = 1; i < v.numel(); ++i) mx = std::max(mx, v[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

Tensor softmax(const Tensor& v) {
    if (v.numel() == 0) throw DimensionError("softmax: empty input");
    double mx = v[0];
    for (std::size_t i = 1; i < v.numel(); ++i) mx = std::max(mx, v[i]);
    Tensor out = v;
    double s = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) {
        out[i] = std::exp(v[i] - mx);
        s += out[i];
    }
    for (std::size_t i = 0; i < v.numel(); ++i) out[i] /= s;
    return out;
}

Tensor softmax_rows(const Tensor& m) {
    if (m.rank() != 2) throw DimensionError("softmax_rows: rank-2 required");
    Tensor out = m;
    const std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double mx = m.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, m.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(m.at(i, j) - mx);
            s += out.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= s;
    }
    return out;
}

Tensor logsumexp_rows(const Tensor& m) {
    if (m.rank() != 2) throw DimensionError("logsumexp_rows: rank-2 required");
    Tensor out({m.rows()});
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = m.at(i, 0);
        for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, m.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += std::exp(m.at(i, j) - mx);
        out[i] = mx + std::log(s);
    }
    return out;
}

std::size_t argmax(const Tensor& v) {
    if (v.numel() == 0) throw DimensionError("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.numel(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

Tensor one_hot(std::size_t index, std::size_t k) {
    if (index >= k) throw DimensionError("one_hot: index out of range");
    Tensor t({k});
    t[index] = 1.0;
    return t;
}

double shannon_entropy(const Tensor& probs) {
    double h = 0.0;
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        double p = probs[i];
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace tta
