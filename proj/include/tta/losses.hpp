// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training losses in (expanded) conjugate form ell(h, y) = f(h) - y^T g(h),
// together with the conjugate pseudo-label (the y solving grad_f(h) =
// jac_g(h)^T y) and the conjugate adaptation loss ell(h, y_cpl(h)). For
// g = identity these reduce to y_cpl = grad_f(h) and -f*(grad_f(h)).
#pragma once

#include <cstddef>
#include <vector>

#include "tta/autodiff.hpp"
#include "tta/tensor.hpp"

namespace tta {

enum class LossKind { CrossEntropy, Squared, PolyLoss, Exponential };

const char* loss_kind_name(LossKind k);
LossKind parse_loss_kind(const std::string& name);  // ConfigError on unknown kind

struct LossParams {
    double epsilon = 0.0;  // polyloss coupling strength
};

class LossSpec {
public:
    // Validates parameters: num_classes >= 2 for multiclass kinds, exactly 2
    // for the scalar-score exponential loss, epsilon >= 0.
    static LossSpec make(LossKind kind, LossParams params, std::size_t num_classes);

    LossKind kind() const { return kind_; }
    double epsilon() const { return params_.epsilon; }
    std::size_t num_classes() const { return num_classes_; }
    // Dimension of the logit vector the loss consumes: num_classes for
    // multiclass kinds, 1 for the exponential (single real score, labels ±1).
    std::size_t logit_dim() const;

    // --- pointwise evaluation on one logit vector ---
    double f(const Tensor& h) const;       // convex potential
    Tensor grad_f(const Tensor& h) const;
    Tensor g(const Tensor& h) const;       // target-coupling map (identity unless expanded form)
    Tensor jac_g(const Tensor& h) const;   // logit_dim x logit_dim Jacobian of g
    bool g_is_identity() const { return kind_ == LossKind::CrossEntropy || kind_ == LossKind::Squared; }

    double supervised(const Tensor& h, const Tensor& y) const;  // f(h) - y . g(h)
    Tensor conjugate_pseudolabel(const Tensor& h) const;
    double conjugate_loss(const Tensor& h) const;  // supervised(h, conjugate_pseudolabel(h))

    // For g = identity: |(f(h) - h.grad_f(h)) + f*(grad_f(h))| with an analytic
    // f*. For expanded-form losses: the stationarity residual
    // ||grad_f(h) - jac_g(h)^T y_cpl||_inf.
    double fenchel_gap(const Tensor& h) const;

    // Analytic convex conjugate f*(y). For cross-entropy this is negative
    // entropy restricted to the simplex: inputs off the simplex by more than
    // 1e-9 throw DomainError.
    double conjugate_of_f(const Tensor& y) const;

    // Domain check for labels/pseudo-labels of this loss kind.
    void validate_label(const Tensor& y, double tol = 1e-9) const;

    // --- batch graph builders (logits [m x logit_dim], mean over the batch) ---
    // Supervised loss at fixed labels (labels enter as constants).
    ad::Graph::NodeId supervised_mean_node(ad::Graph& g, ad::Graph::NodeId h,
                                           const Tensor& labels) const;
    // Per-sample supervised losses as a rank-1 node [m] (labels constant).
    ad::Graph::NodeId supervised_rows_node(ad::Graph& g, ad::Graph::NodeId h,
                                           const Tensor& labels) const;
    // Conjugate adaptation loss; the gradient flows through the pseudo-label
    // (for cross-entropy this builds exactly the softmax-entropy graph).
    ad::Graph::NodeId conjugate_mean_node(ad::Graph& g, ad::Graph::NodeId h) const;

private:
    LossSpec() = default;
    LossKind kind_ = LossKind::CrossEntropy;
    LossParams params_;
    std::size_t num_classes_ = 2;
};

// Free functions mirroring the loss-framework operation names.
inline LossSpec make_loss(LossKind kind, LossParams params, std::size_t num_classes) {
    return LossSpec::make(kind, params, num_classes);
}
inline double supervised_loss(const LossSpec& s, const Tensor& h, const Tensor& y) {
    return s.supervised(h, y);
}
inline Tensor conjugate_pseudolabel(const LossSpec& s, const Tensor& h) {
    return s.conjugate_pseudolabel(h);
}
inline double conjugate_loss(const LossSpec& s, const Tensor& h) { return s.conjugate_loss(h); }
inline double fenchel_gap(const LossSpec& s, const Tensor& h) { return s.fenchel_gap(h); }

// Encodes integer class labels into the loss's target tensor: one-hot rows
// [m x K] for multiclass kinds (labels in 0..K-1), a ±1 column [m x 1] for the
// exponential loss (labels in {-1, +1}).
Tensor encode_labels(const LossSpec& spec, const std::vector<int>& labels);

// Mean softmax-entropy of a logit batch, built as lse(h) - softmax(h).h per
// row. Shared by the entropy objective and the cross-entropy conjugate loss so
// the two produce identical graphs.
ad::Graph::NodeId softmax_entropy_mean_node(ad::Graph& g, ad::Graph::NodeId h);

}  // namespace tta
