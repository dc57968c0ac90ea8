// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/linalg.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "tta/errors.hpp"

namespace tta::linalg {

Tensor solve(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw DimensionError("solve: square matrix required, got " + a.shape_str());
    const std::size_t n = a.rows();
    if (b.numel() != n) throw DimensionError("solve: rhs length mismatch");

    Tensor m = a;
    Tensor x = b;
    double max_pivot = 0.0, min_pivot = 0.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m.at(r, col)) > std::abs(m.at(piv, col))) piv = r;
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m.at(col, j), m.at(piv, j));
            std::swap(x[col], x[piv]);
        }
        const double p = m.at(col, col);
        const double ap = std::abs(p);
        max_pivot = col == 0 ? ap : std::max(max_pivot, ap);
        min_pivot = col == 0 ? ap : std::min(min_pivot, ap);
        if (ap < 1e-300 || !std::isfinite(p)) {
            std::ostringstream os;
            os << "solve: singular system (pivot " << p << " at column " << col
               << ", condition estimate >= "
               << (min_pivot > 0.0 ? max_pivot / min_pivot : std::numeric_limits<double>::infinity())
               << ")";
            throw NumericalError(os.str());
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = m.at(r, col) / p;
            if (f == 0.0) continue;
            m.at(r, col) = 0.0;
            for (std::size_t j = col + 1; j < n; ++j) m.at(r, j) -= f * m.at(col, j);
            x[r] -= f * x[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= m.at(i, j) * x[j];
        x[i] = s / m.at(i, i);
    }
    return x;
}

namespace {

std::optional<Tensor> try_cholesky(const Tensor& a) {
    const std::size_t n = a.rows();
    Tensor l({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s)) return std::nullopt;
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    return l;
}

}  // namespace

Tensor cholesky_with_jitter(const Tensor& a, double jitter) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw DimensionError("cholesky: square matrix required, got " + a.shape_str());
    if (auto l = try_cholesky(a)) return *l;
    Tensor aj = a;
    for (std::size_t i = 0; i < a.rows(); ++i) aj.at(i, i) += jitter;
    if (auto l = try_cholesky(aj)) return *l;
    throw NumericalError("cholesky failed even after " + std::to_string(jitter) +
                         " diagonal jitter");
}

bool psd_check(const Tensor& a, double jitter) {
    if (a.rank() != 2 || a.rows() != a.cols()) return false;
    try {
        cholesky_with_jitter(a, jitter);
        return true;
    } catch (const NumericalError&) {
        return false;
    }
}

QrResult householder_qr(const Tensor& a) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw DimensionError("householder_qr: square matrix required");
    const std::size_t n = a.rows();
    Tensor r = a;
    Tensor q({n, n});
    for (std::size_t i = 0; i < n; ++i) q.at(i, i) = 1.0;

    std::vector<double> v(n);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < n; ++i) norm += r.at(i, k) * r.at(i, k);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = r.at(k, k) >= 0.0 ? -norm : norm;
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < n; ++i) {
            v[i] = r.at(i, k) - (i == k ? alpha : 0.0);
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 == 0.0) continue;
        // apply H = I - 2 v v^T / (v^T v) to R (left) and accumulate into Q
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < n; ++i) s += v[i] * r.at(i, j);
            s = 2.0 * s / vnorm2;
            for (std::size_t i = k; i < n; ++i) r.at(i, j) -= s * v[i];
        }
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < n; ++i) s += v[i] * q.at(j, i);
            s = 2.0 * s / vnorm2;
            for (std::size_t i = k; i < n; ++i) q.at(j, i) -= s * v[i];
        }
    }
    return {std::move(q), std::move(r)};
}

}  // namespace tta::linalg
