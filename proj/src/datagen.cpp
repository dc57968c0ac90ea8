// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/datagen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "tta/errors.hpp"
#include "tta/linalg.hpp"

namespace tta {

Tensor sample_haar_orthogonal(std::size_t dim, Rng& rng) {
    if (dim < 1) throw ConfigError("sample_haar_orthogonal: dim must be >= 1");
    Tensor a({dim, dim});
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.normal();
    auto qr = linalg::householder_qr(a);
    // sign correction makes the distribution Haar rather than QR-convention biased
    for (std::size_t j = 0; j < dim; ++j)
        if (qr.r.at(j, j) < 0.0)
            for (std::size_t i = 0; i < dim; ++i) qr.q.at(i, j) = -qr.q.at(i, j);
    return qr.q;
}

namespace {

Tensor sample_covariance(std::size_t dim, double d_lo, double d_hi, Rng& rng) {
    Tensor u = sample_haar_orthogonal(dim, rng);
    Tensor d({dim});
    for (std::size_t i = 0; i < dim; ++i) d[i] = rng.uniform(d_lo, d_hi);
    // sigma = U D U^T, symmetrized against rounding
    Tensor sigma({dim, dim});
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) s += u.at(i, k) * d[k] * u.at(j, k);
            sigma.at(i, j) = s;
            sigma.at(j, i) = s;
        }
    return sigma;
}

Tensor sample_mean(double k, std::size_t dim, Rng& rng) {
    Tensor mu({dim});
    for (std::size_t i = 0; i < dim; ++i) mu[i] = k + rng.normal();
    return mu;
}

}  // namespace

ClusterParams make_cluster_params(double k, const GaussianShiftSpec& spec, Rng& rng) {
    if (!(spec.d_lo > 0.0) || spec.d_hi < spec.d_lo)
        throw ConfigError("cluster covariance range requires 0 < d_lo <= d_hi");
    ClusterParams p;
    p.mu_pos = sample_mean(k, spec.dim, rng);
    p.sigma_pos = sample_covariance(spec.dim, spec.d_lo, spec.d_hi, rng);
    p.mu_neg = sample_mean(k, spec.dim, rng);
    p.sigma_neg = sample_covariance(spec.dim, spec.d_lo, spec.d_hi, rng);
    return p;
}

ClusterParams interpolate_shift(const ClusterParams& source, const ClusterParams& target,
                                double lambda) {
    if (!source.mu_pos.same_shape(target.mu_pos) || !source.sigma_pos.same_shape(target.sigma_pos))
        throw DimensionError("interpolate_shift: source/target dimension mismatch");
    if (lambda < 0.0 || lambda > 1.0)
        throw ConfigError("interpolate_shift: lambda must lie in [0, 1]");
    auto mix = [lambda](const Tensor& s, const Tensor& t) {
        Tensor out = s;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = lambda * t[i] + (1.0 - lambda) * s[i];
        return out;
    };
    ClusterParams p;
    p.mu_pos = mix(source.mu_pos, target.mu_pos);
    p.mu_neg = mix(source.mu_neg, target.mu_neg);
    p.sigma_pos = mix(source.sigma_pos, target.sigma_pos);
    p.sigma_neg = mix(source.sigma_neg, target.sigma_neg);
    return p;
}

Dataset sample_dataset(const ClusterParams& params, std::size_t n_per_class, Rng& rng) {
    if (n_per_class < 1) throw ConfigError("sample_dataset: n_per_class must be >= 1");
    const std::size_t d = params.mu_pos.numel();
    const std::size_t n = 2 * n_per_class;
    const Tensor l_pos = linalg::cholesky_with_jitter(params.sigma_pos);
    const Tensor l_neg = linalg::cholesky_with_jitter(params.sigma_neg);

    Tensor x({n, d});
    std::vector<int> labels(n);
    Tensor z({d});
    for (std::size_t cls = 0; cls < 2; ++cls) {
        const Tensor& mu = cls == 0 ? params.mu_pos : params.mu_neg;
        const Tensor& l = cls == 0 ? l_pos : l_neg;
        for (std::size_t s = 0; s < n_per_class; ++s) {
            const std::size_t row = cls * n_per_class + s;
            for (std::size_t i = 0; i < d; ++i) z[i] = rng.normal();
            for (std::size_t i = 0; i < d; ++i) {
                double v = mu[i];
                for (std::size_t k = 0; k <= i; ++k) v += l.at(i, k) * z[k];
                x.at(row, i) = v;
            }
            labels[row] = cls == 0 ? 1 : -1;
        }
    }

    const auto perm = rng.permutation(n);
    Dataset out;
    out.inputs = Tensor({n, d});
    out.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        out.labels[r] = labels[perm[r]];
        for (std::size_t j = 0; j < d; ++j) out.inputs.at(r, j) = x.at(perm[r], j);
    }
    return out;
}

Dataset to_multiclass(const Dataset& d) {
    Dataset out = d;
    for (auto& l : out.labels) {
        if (l == 1)
            l = 0;
        else if (l == -1)
            l = 1;
        else
            throw ConfigError("to_multiclass: expected ±1 labels");
    }
    return out;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view field, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
        throw IoError("line " + std::to_string(line_no) + ": bad number '" + std::string(field) +
                      "'");
    return v;
}

}  // namespace

void save_dataset_csv(const std::string& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    std::string line = "label";
    const std::size_t cols = d.inputs.cols();
    for (std::size_t j = 0; j < cols; ++j) line += ",f" + std::to_string(j);
    out << line << '\n';
    for (std::size_t i = 0; i < d.inputs.rows(); ++i) {
        line = std::to_string(d.labels[i]);
        for (std::size_t j = 0; j < cols; ++j) {
            line += ',';
            append_double(line, d.inputs.at(i, j));
        }
        out << line << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": no header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t cols = 0;
    {
        std::stringstream ss(line);
        std::string field;
        bool first = true;
        while (std::getline(ss, field, ',')) {
            if (first) {
                if (field != "label") throw IoError(path + ": header must start with 'label'");
                first = false;
            } else {
                ++cols;
            }
        }
        if (first) throw IoError(path + ": no header");
    }

    std::vector<double> data;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::size_t col = 0;
        while (std::getline(ss, field, ',')) {
            if (col == 0) {
                labels.push_back(static_cast<int>(parse_double(field, line_no)));
            } else {
                if (col > cols)
                    throw IoError("line " + std::to_string(line_no) + ": too many columns");
                data.push_back(parse_double(field, line_no));
            }
            ++col;
        }
        if (col != cols + 1)
            throw IoError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(cols + 1) + " columns, got " + std::to_string(col));
    }
    Dataset d;
    d.inputs = Tensor({labels.size(), cols}, std::move(data));
    d.labels = std::move(labels);
    return d;
}

}  // namespace tta
