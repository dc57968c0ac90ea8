// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic Gaussian-cluster distribution-shift generator: per-class means
// drawn from N(k*1, I), covariances U D U^T with Haar-random U, and convex
// interpolation between independently drawn source and target cluster
// parameters controlled by lambda.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tta/rng.hpp"
#include "tta/tensor.hpp"

namespace tta {

struct ClusterParams {
    Tensor mu_pos, mu_neg;        // mean vectors, length d
    Tensor sigma_pos, sigma_neg;  // d x d symmetric PSD covariances
};

struct GaussianShiftSpec {
    std::size_t dim = 100;
    double lambda = 0.0;
    double k_source = 0.0;
    double k_target = 1.0;
    double d_lo = 0.5;  // sampling range for the diagonal of D
    double d_hi = 2.0;
    std::uint64_t seed = 0;
};

struct Dataset {
    enum class Role { SourceTrain, SourceVal, TestStream };
    Tensor inputs;            // n x d
    std::vector<int> labels;  // ±1 (binary) or 0..K-1 (multiclass)
    Role role = Role::SourceTrain;
};

// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with
// the R-diagonal sign correction.
Tensor sample_haar_orthogonal(std::size_t dim, Rng& rng);

// Per-class means from N(k*1, I) and covariances U D U^T with D diagonal
// uniform in [d_lo, d_hi]. Throws ConfigError for an invalid range.
ClusterParams make_cluster_params(double k, const GaussianShiftSpec& spec, Rng& rng);

// Elementwise convex combination (1-lambda)*source + lambda*target.
ClusterParams interpolate_shift(const ClusterParams& source, const ClusterParams& target,
                                double lambda);

// n_per_class draws per class via the Cholesky factor of each covariance
// (labels ±1), rows shuffled deterministically by rng.
Dataset sample_dataset(const ClusterParams& params, std::size_t n_per_class, Rng& rng);

// Relabels ±1 as class indices {+1 -> 0, -1 -> 1} for multiclass losses.
Dataset to_multiclass(const Dataset& d);

// CSV with header "label,f0,f1,..."; floats serialized with round-trip
// precision, so load(save(d)) is value-exact. Malformed rows throw IoError
// naming the line.
void save_dataset_csv(const std::string& path, const Dataset& d);
Dataset load_dataset_csv(const std::string& path);

}  // namespace tta
