// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tta/tensor.hpp"

namespace tta::linalg {

// Solve A x = b by Gaussian elimination with partial pivoting. A is n x n,
// b rank-1 of length n. Throws NumericalError with a crude condition estimate
// (max/min pivot magnitude) when a pivot collapses.
Tensor solve(const Tensor& a, const Tensor& b);

// Lower Cholesky factor of a symmetric positive-definite matrix. On failure
// retries once with `jitter * I` added; throws NumericalError if that also
// fails.
Tensor cholesky_with_jitter(const Tensor& a, double jitter = 1e-10);

// True when `a` admits a Cholesky factorization after at most `jitter` of
// diagonal regularization.
bool psd_check(const Tensor& a, double jitter = 1e-10);

// Householder QR of a square matrix; q has orthonormal columns.
struct QrResult {
    Tensor q;
    Tensor r;
};
QrResult householder_qr(const Tensor& a);

}  // namespace tta::linalg
