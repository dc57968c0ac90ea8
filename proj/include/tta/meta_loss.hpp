// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Meta-learning harness that searches for an adaptation loss over logits:
// a permutation-invariant network m(h) = sum_k MLP([h_k, lse(h)]) is trained
// by alternating an inner gradient step on the model (using m as the loss)
// with an outer finite-difference step on the network parameters against a
// supervised task loss. Includes 1-D slice export and template fitting.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tta/autodiff.hpp"
#include "tta/losses.hpp"
#include "tta/model.hpp"
#include "tta/tta_engine.hpp"

namespace tta {

class MetaLossNet {
public:
    // Shared two-hidden-layer tanh MLP over [h_k, logsumexp(h)] per class,
    // summed over classes. hidden <= 16; total parameter count <= 512 (the
    // finite-difference budget). zero_final makes the net identically zero.
    static MetaLossNet create(std::size_t num_classes, std::size_t hidden, Rng& rng,
                              bool zero_final = true);

    std::size_t num_classes() const { return num_classes_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t param_count() const;

    double eval(const Tensor& logits) const;  // single logit vector
    // Mean meta loss over a logit batch [m x K]; differentiable w.r.t. the
    // logits (net parameters enter as constants).
    ad::Graph::NodeId build_mean_node(ad::Graph& g, ad::Graph::NodeId logits) const;

    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& params);
    double& param(std::size_t index);

    std::string to_json_string() const;
    static MetaLossNet from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static MetaLossNet load(const std::string& path);

private:
    std::size_t num_classes_ = 2;
    std::size_t hidden_ = 8;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

struct MetaConfig {
    double alpha = 0.1;       // inner learning rate
    double beta = 0.05;       // outer learning rate
    int iterations = 200;
    LossSpec task_loss = LossSpec::make(LossKind::CrossEntropy, {}, 2);
    double fd_step = 1e-3;
    ParamMask mask{MaskMode::All};
    std::uint64_t seed = 0;
};

// Unlabeled adaptation batch plus a labeled evaluation batch from the same
// shifted distribution.
struct ShiftPair {
    Tensor unlabeled;
    Tensor labeled_inputs;
    std::vector<int> labeled_targets;
};

// One gradient step of the mean meta loss on the masked model parameters.
void inner_update(Model& model, const Tensor& batch, const MetaLossNet& net, double alpha,
                  const ParamMask& mask);

// Outer objective F(phi): task loss on the labeled batch after one inner
// update (on a fresh copy of the model) with the unlabeled batch.
double outer_objective(const MetaLossNet& net, const Model& model, const ShiftPair& pair,
                       const MetaConfig& cfg);

// Central finite differences of F per network parameter; the net is restored
// between probes so F is evaluated as a pure function of phi.
std::vector<double> outer_gradient(const MetaLossNet& net, const Model& model,
                                   const ShiftPair& pair, const MetaConfig& cfg);

struct MetaTrainResult {
    MetaLossNet net;
    std::vector<double> objective_trajectory;  // mean over pairs, per iteration (+ final)
    bool improved = true;                      // false => flagged NOT_IMPROVED
};

// Alternates inner updates (fresh model copy per evaluation) with outer
// finite-difference descent, averaging the outer gradient over all pairs.
MetaTrainResult meta_train(MetaLossNet net, const Model& model,
                           const std::vector<ShiftPair>& pairs, const MetaConfig& cfg);

struct SlicePoint {
    double x;
    double loss;
};

// Sweeps coordinate `dim` of `base` linearly over [lo, hi] and evaluates fn.
std::vector<SlicePoint> slice_export(const std::function<double(const Tensor&)>& fn,
                                     const Tensor& base, std::size_t dim, double lo, double hi,
                                     std::size_t steps);
std::string slice_to_csv(const std::vector<SlicePoint>& curve);  // "x,loss"

std::function<double(const Tensor&)> net_slice_fn(const MetaLossNet& net);
// Wraps a tta objective (applied to a single temperature-scaled logit vector).
std::function<double(const Tensor&)> objective_slice_fn(Method method, const LossSpec& spec,
                                                        double temperature);

struct FittedEntropyParams {
    double alpha_mag = 0.0;
    double temperature = 1.0;
    double offset = 0.0;
    double residual = 0.0;  // sum of squared errors
};

// Least-squares fit of alpha * H(softmax(h/T)) + c over the slice, with a
// grid-refined 1-D search on T in [0.1, 10] and closed-form (alpha, c) per T.
// The offset exists because a learnt loss is defined up to an additive
// constant. A constant curve returns alpha = 0 with residual 0.
FittedEntropyParams fit_scaled_entropy(const std::vector<SlicePoint>& curve, const Tensor& base,
                                       std::size_t dim);

struct QuadraticFit {
    double a = 0.0, b = 0.0, c = 0.0;
    double residual = 0.0;
};
QuadraticFit fit_quadratic(const std::vector<SlicePoint>& curve);

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tta
