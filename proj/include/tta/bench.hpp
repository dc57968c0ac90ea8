// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reusable experiment harnesses over the synthetic Gaussian-shift benchmark:
// the lambda x method adaptation sweep for the exponential-loss linear
// classifier, and the meta-learning benchmark over 2-class shifts.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tta/datagen.hpp"
#include "tta/meta_loss.hpp"
#include "tta/tta_engine.hpp"

namespace tta {

struct ToyShiftConfig {
    std::size_t dim = 100;
    double d_lo = 0.5, d_hi = 2.0;
    double k_source = 0.0, k_target = 1.0;
    std::size_t n_train_per_class = 2000;
    std::size_t n_test_per_class = 2500;
    double train_lr = 0.05;
    int train_epochs = 30;
    std::size_t train_batch = 128;
    double adapt_lr = 0.5;
    double temperature = 1.0;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    std::size_t batch_size = 200;
    double hard_threshold = 0.9;
    std::vector<double> lambdas = {0.6, 0.65, 0.7};
    std::vector<Method> methods = {Method::None, Method::Entropy, Method::HardPl,
                                   Method::ConjugatePl};
    // per-method (lr, T) selected by grid search on a labeled validation shift,
    // mirroring the corruption-benchmark tuning protocol; adapt_lr/temperature
    // are used as-is when disabled
    bool tune_per_method = false;
    double val_lambda = 0.5;
    std::size_t n_val_per_class = 1000;
    std::vector<double> lr_grid = {1e-1, 1e-2, 1e-3, 1e-4};
    std::vector<double> t_grid = {1, 2, 3, 4, 5};
};

struct ToyCell {
    double lambda = 0.0;
    Method method = Method::None;
    std::vector<double> per_seed_accuracy;
    double mean_accuracy = 0.0;
    std::vector<double> step_accuracy_mean;  // per adaptation step, mean over seeds
    std::vector<double> per_seed_lr, per_seed_temperature;  // tuned values when enabled
};

struct ToySweepResult {
    ToyShiftConfig config;
    std::vector<std::uint64_t> seeds;
    std::vector<double> source_accuracy_per_seed;  // on held-out source-distribution data
    std::vector<ToyCell> cells;

    const ToyCell& cell(double lambda, Method method) const;
    std::string summary_csv() const;  // lambda rows x method accuracy columns
};

// Trains one exponential-loss linear classifier per seed on unshifted data,
// then adapts a fresh copy per (lambda, method) over the shifted test stream.
ToySweepResult run_shift_sweep(const ToyShiftConfig& cfg,
                               const std::vector<std::uint64_t>& seeds);

struct MetaBenchConfig {
    std::size_t dim = 8;
    std::size_t num_classes = 2;
    double d_lo = 0.5, d_hi = 2.0;
    double k_source = 0.0, k_target = 1.0;
    std::vector<double> train_lambdas = {0.5, 0.7};
    double holdout_lambda = 0.6;
    std::size_t unlabeled_per_pair = 48;
    std::size_t labeled_per_pair = 48;
    LossKind source_loss = LossKind::CrossEntropy;
    LossKind task_loss = LossKind::CrossEntropy;
    std::size_t n_source_per_class = 400;
    double source_lr = 0.2;
    int source_epochs = 40;
    std::size_t source_batch = 64;
    std::size_t net_hidden = 8;
    double alpha = 0.5;
    double beta = 0.2;
    int iterations = 200;
    double fd_step = 1e-3;
    double slice_lo = -5.0, slice_hi = 5.0;
    std::size_t slice_steps = 41;
};

struct MetaBenchResult {
    MetaLossNet net;
    std::vector<double> trajectory;
    double holdout_initial = 0.0;  // outer task loss with the initial (zero) net
    double holdout_final = 0.0;
    std::vector<SlicePoint> slice;
    FittedEntropyParams entropy_fit;
    QuadraticFit quadratic_fit;
};

// Trains a linear source classifier on 2-class Gaussian data, meta-trains the
// loss net across the training shift levels, and evaluates on the held-out
// shift. The net starts with a zero final layer, so the iteration-0 outer
// objective equals the unadapted task loss.
MetaBenchResult run_meta_benchmark(const MetaBenchConfig& cfg, std::uint64_t seed);

}  // namespace tta
