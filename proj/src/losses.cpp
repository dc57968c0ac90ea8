// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/losses.hpp"

#include <cmath>
#include <string>

#include "tta/errors.hpp"
#include "tta/linalg.hpp"

namespace tta {

const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::CrossEntropy: return "cross_entropy";
        case LossKind::Squared: return "squared";
        case LossKind::PolyLoss: return "polyloss";
        case LossKind::Exponential: return "exponential";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "cross_entropy") return LossKind::CrossEntropy;
    if (name == "squared") return LossKind::Squared;
    if (name == "polyloss") return LossKind::PolyLoss;
    if (name == "exponential") return LossKind::Exponential;
    throw ConfigError("unknown loss kind: " + name);
}

LossSpec LossSpec::make(LossKind kind, LossParams params, std::size_t num_classes) {
    if (params.epsilon < 0.0) throw ConfigError("loss epsilon must be >= 0");
    if (kind == LossKind::Exponential) {
        if (num_classes != 2)
            throw ConfigError("exponential loss is defined for binary scores (num_classes == 2)");
    } else if (num_classes < 2) {
        throw ConfigError("num_classes must be >= 2 for multiclass losses");
    }
    LossSpec s;
    s.kind_ = kind;
    s.params_ = params;
    s.num_classes_ = num_classes;
    return s;
}

std::size_t LossSpec::logit_dim() const {
    return kind_ == LossKind::Exponential ? 1 : num_classes_;
}

namespace {

void require_logit_dim(const LossSpec& s, const Tensor& h) {
    if (h.numel() != s.logit_dim())
        throw DimensionError(std::string("logit vector of length ") + std::to_string(h.numel()) +
                             " does not match loss dimension " + std::to_string(s.logit_dim()));
    if (!h.all_finite()) throw NumericalError("non-finite logit vector");
}

}  // namespace

double LossSpec::f(const Tensor& h) const {
    require_logit_dim(*this, h);
    switch (kind_) {
        case LossKind::CrossEntropy:
        case LossKind::PolyLoss:
            return logsumexp(h);
        case LossKind::Squared:
            return 0.5 * squared_norm(h);
        case LossKind::Exponential:
            return std::cosh(h[0]);
    }
    return 0.0;
}

Tensor LossSpec::grad_f(const Tensor& h) const {
    require_logit_dim(*this, h);
    switch (kind_) {
        case LossKind::CrossEntropy:
        case LossKind::PolyLoss:
            return softmax(h);
        case LossKind::Squared:
            return h;
        case LossKind::Exponential:
            return Tensor::vec({std::sinh(h[0])});
    }
    return {};
}

Tensor LossSpec::g(const Tensor& h) const {
    require_logit_dim(*this, h);
    switch (kind_) {
        case LossKind::CrossEntropy:
        case LossKind::Squared:
            return h;
        case LossKind::PolyLoss: {
            // g(h) = h - eps * (1 - softmax(h))
            Tensor s = softmax(h);
            Tensor out = h;
            for (std::size_t i = 0; i < out.numel(); ++i)
                out[i] -= params_.epsilon * (1.0 - s[i]);
            return out;
        }
        case LossKind::Exponential:
            return Tensor::vec({std::sinh(h[0])});
    }
    return {};
}

Tensor LossSpec::jac_g(const Tensor& h) const {
    require_logit_dim(*this, h);
    const std::size_t k = logit_dim();
    Tensor j({k, k});
    switch (kind_) {
        case LossKind::CrossEntropy:
        case LossKind::Squared:
            for (std::size_t i = 0; i < k; ++i) j.at(i, i) = 1.0;
            break;
        case LossKind::PolyLoss: {
            Tensor s = softmax(h);
            for (std::size_t r = 0; r < k; ++r)
                for (std::size_t c = 0; c < k; ++c)
                    j.at(r, c) = (r == c ? 1.0 + params_.epsilon * s[r] : 0.0) -
                                 params_.epsilon * s[r] * s[c];
            break;
        }
        case LossKind::Exponential:
            j.at(0, 0) = std::cosh(h[0]);
            break;
    }
    return j;
}

double LossSpec::supervised(const Tensor& h, const Tensor& y) const {
    require_logit_dim(*this, h);
    if (y.numel() != logit_dim())
        throw DimensionError("label length " + std::to_string(y.numel()) +
                             " does not match loss dimension " + std::to_string(logit_dim()));
    return f(h) - dot(y, g(h));
}

Tensor LossSpec::conjugate_pseudolabel(const Tensor& h) const {
    require_logit_dim(*this, h);
    switch (kind_) {
        case LossKind::CrossEntropy:
            return softmax(h);
        case LossKind::Squared:
            return h;
        case LossKind::PolyLoss: {
            // jac_g is symmetric (diag + rank-1), so jac_g^T y = grad_f is the
            // plain solve jac_g y = softmax(h)
            return linalg::solve(jac_g(h), softmax(h));
        }
        case LossKind::Exponential:
            return Tensor::vec({std::tanh(h[0])});
    }
    return {};
}

double LossSpec::conjugate_loss(const Tensor& h) const {
    return supervised(h, conjugate_pseudolabel(h));
}

double LossSpec::conjugate_of_f(const Tensor& y) const {
    switch (kind_) {
        case LossKind::CrossEntropy:
        case LossKind::PolyLoss: {
            // negative entropy, restricted to the probability simplex
            if (y.numel() != num_classes_) throw DimensionError("conjugate_of_f: length mismatch");
            double s = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) {
                if (y[i] < -1e-9) throw DomainError("conjugate_of_f: negative probability");
                s += y[i];
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw DomainError("conjugate_of_f: input off the probability simplex");
            double v = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i)
                if (y[i] > 0.0) v += y[i] * std::log(y[i]);
            return v;
        }
        case LossKind::Squared:
            return 0.5 * squared_norm(y);
        case LossKind::Exponential: {
            // f = cosh: f*(y) = y asinh(y) - sqrt(1 + y^2)
            const double v = y.value();
            return v * std::asinh(v) - std::sqrt(1.0 + v * v);
        }
    }
    return 0.0;
}

double LossSpec::fenchel_gap(const Tensor& h) const {
    require_logit_dim(*this, h);
    if (g_is_identity()) {
        const Tensor y = grad_f(h);
        return std::abs((f(h) - dot(h, y)) + conjugate_of_f(y));
    }
    const Tensor y = conjugate_pseudolabel(h);
    const Tensor gf = grad_f(h);
    const Tensor jt = transpose(jac_g(h));
    double resid = 0.0;
    for (std::size_t r = 0; r < jt.rows(); ++r) {
        double s = gf[r];
        for (std::size_t c = 0; c < jt.cols(); ++c) s -= jt.at(r, c) * y[c];
        resid = std::max(resid, std::abs(s));
    }
    return resid;
}

void LossSpec::validate_label(const Tensor& y, double tol) const {
    if (y.numel() != logit_dim()) throw DimensionError("label length mismatch");
    switch (kind_) {
        case LossKind::CrossEntropy:
        case LossKind::PolyLoss: {
            if (kind_ == LossKind::CrossEntropy) {
                double s = 0.0;
                for (std::size_t i = 0; i < y.numel(); ++i) {
                    if (y[i] < -tol) throw DomainError("cross-entropy label has negative entry");
                    s += y[i];
                }
                if (std::abs(s - 1.0) > tol)
                    throw DomainError("cross-entropy label off the probability simplex");
            }
            break;
        }
        case LossKind::Squared:
            break;  // unconstrained
        case LossKind::Exponential: {
            const double v = y.value();
            if (!(v > -1.0 && v < 1.0))
                throw DomainError("exponential pseudo-label must lie strictly in (-1, 1)");
            break;
        }
    }
}

Tensor encode_labels(const LossSpec& spec, const std::vector<int>& labels) {
    const std::size_t m = labels.size();
    if (spec.kind() == LossKind::Exponential) {
        Tensor y({m, 1});
        for (std::size_t i = 0; i < m; ++i) {
            if (labels[i] != 1 && labels[i] != -1)
                throw ConfigError("exponential loss labels must be +1/-1");
            y.at(i, 0) = static_cast<double>(labels[i]);
        }
        return y;
    }
    const std::size_t k = spec.num_classes();
    Tensor y({m, k});
    for (std::size_t i = 0; i < m; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw ConfigError("class label out of range: " + std::to_string(labels[i]));
        y.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return y;
}

ad::Graph::NodeId softmax_entropy_mean_node(ad::Graph& g, ad::Graph::NodeId h) {
    const auto lse = g.logsumexp_rows(h);
    const auto cross = g.sum_rows(g.mul(g.softmax_rows(h), h));
    return g.mean_all(g.sub(lse, cross));
}

namespace {

using NodeId = ad::Graph::NodeId;

// rows of ell(h_i, y_i) = f(h_i) - y_i . g(h_i) as a rank-1 node [m]
NodeId per_sample_supervised(const LossSpec& spec, ad::Graph& g, NodeId h, NodeId y) {
    switch (spec.kind()) {
        case LossKind::CrossEntropy:
            return g.sub(g.logsumexp_rows(h), g.sum_rows(g.mul(y, h)));
        case LossKind::Squared:
            return g.sub(g.scale(g.sum_rows(g.mul(h, h)), 0.5), g.sum_rows(g.mul(y, h)));
        case LossKind::PolyLoss: {
            const auto s = g.softmax_rows(h);
            const auto ones = g.constant(Tensor::filled(g.value(h).shape(), 1.0));
            const auto gh = g.sub(h, g.scale(g.sub(ones, s), spec.epsilon()));
            return g.sub(g.logsumexp_rows(h), g.sum_rows(g.mul(y, gh)));
        }
        case LossKind::Exponential: {
            const auto ep = g.exp(h);
            const auto en = g.exp(g.scale(h, -1.0));
            const auto fpart = g.scale(g.add(ep, en), 0.5);
            const auto gpart = g.scale(g.sub(ep, en), 0.5);
            return g.sum_rows(g.sub(fpart, g.mul(y, gpart)));
        }
    }
    throw ConfigError("unknown loss kind");
}

}  // namespace

ad::Graph::NodeId LossSpec::supervised_mean_node(ad::Graph& g, ad::Graph::NodeId h,
                                                 const Tensor& labels) const {
    return g.mean_all(supervised_rows_node(g, h, labels));
}

ad::Graph::NodeId LossSpec::supervised_rows_node(ad::Graph& g, ad::Graph::NodeId h,
                                                 const Tensor& labels) const {
    const Tensor& hv = g.value(h);
    if (hv.rank() != 2 || hv.cols() != logit_dim())
        throw DimensionError("supervised_rows_node: logit batch shape " + hv.shape_str());
    if (!labels.same_shape(hv)) throw DimensionError("supervised_rows_node: label batch mismatch");
    return per_sample_supervised(*this, g, h, g.constant(labels));
}

ad::Graph::NodeId LossSpec::conjugate_mean_node(ad::Graph& g, ad::Graph::NodeId h) const {
    const Tensor& hv = g.value(h);
    if (hv.rank() != 2 || hv.cols() != logit_dim())
        throw DimensionError("conjugate_mean_node: logit batch shape " + hv.shape_str());
    switch (kind_) {
        case LossKind::CrossEntropy:
            return softmax_entropy_mean_node(g, h);
        case LossKind::Squared:
            return g.mean_all(g.scale(g.sum_rows(g.mul(h, h)), -0.5));
        case LossKind::PolyLoss: {
            const auto y = g.poly_pseudolabel_rows(h, params_.epsilon);
            const auto s = g.softmax_rows(h);
            const auto ones = g.constant(Tensor::filled(hv.shape(), 1.0));
            const auto gh = g.sub(h, g.scale(g.sub(ones, s), params_.epsilon));
            return g.mean_all(g.sub(g.logsumexp_rows(h), g.sum_rows(g.mul(y, gh))));
        }
        case LossKind::Exponential: {
            // 2 / (e^z + e^-z)
            const auto denom = g.add(g.exp(h), g.exp(g.scale(h, -1.0)));
            return g.mean_all(g.scale(g.pow_const(denom, -1.0), 2.0));
        }
    }
    throw ConfigError("unknown loss kind");
}

}  // namespace tta
