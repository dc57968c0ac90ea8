// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace tta {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or size mismatch between tensors / vectors.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration value or unknown key.
struct ConfigError : Error {
    using Error::Error;
};

// Input outside a function's mathematical domain (e.g. off-simplex argument
// to the simplex-restricted convex conjugate).
struct DomainError : Error {
    using Error::Error;
};

// Numerical failure of a direct computation (singular solve, Cholesky failure,
// non-finite evaluation).
struct NumericalError : Error {
    using Error::Error;
};

// Non-finite loss/gradient/parameter produced by an iterative run; the message
// names the epoch/batch.
struct DivergenceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// API contract violation (non-scalar backward target, batch of one through
// batch-norm statistics, ...).
struct ContractError : Error {
    using Error::Error;
};

}  // namespace tta
