// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/checks.hpp"

#include <cmath>
#include <sstream>

#include "tta/datagen.hpp"
#include "tta/linalg.hpp"
#include "tta/losses.hpp"
#include "tta/meta_loss.hpp"
#include "tta/model.hpp"
#include "tta/tta_engine.hpp"

namespace tta {

namespace {

Tensor random_logits(std::size_t k, Rng& rng, double lo = -10.0, double hi = 10.0) {
    Tensor h({k});
    for (std::size_t i = 0; i < k; ++i) h[i] = rng.uniform(lo, hi);
    return h;
}

struct Suite {
    std::vector<CheckResult> results;
    void record(const std::string& name, bool pass, double worst, const char* what) {
        std::ostringstream os;
        os << what << " = " << worst;
        results.push_back({name, pass, os.str()});
    }
};

}  // namespace

std::vector<CheckResult> run_invariant_checks(std::uint64_t seed) {
    Suite suite;
    Rng root(seed);

    {  // softmax is the gradient of logsumexp
        Rng rng = root.split(1);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Tensor h = random_logits(5, rng);
            ad::Graph g;
            const auto x = g.leaf(Tensor::mat(1, 5, h.data()));
            const auto out = g.sum_all(g.logsumexp_rows(x));
            const Tensor grad = g.backward(out)[x];
            const Tensor sm = softmax(h);
            for (std::size_t i = 0; i < 5; ++i)
                worst = std::max(worst, std::abs(grad[i] - sm[i]));
        }
        suite.record("softmax_equals_logsumexp_gradient", worst <= 1e-12, worst, "max abs diff");
    }

    {  // logsumexp shift identity
        Rng rng = root.split(2);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Tensor h = random_logits(6, rng);
            const double c = rng.uniform(-1000.0, 1000.0);
            Tensor shifted = h;
            for (std::size_t i = 0; i < h.numel(); ++i) shifted[i] += c;
            worst = std::max(worst, std::abs(logsumexp(shifted) - logsumexp(h) - c));
        }
        suite.record("logsumexp_shift_identity", worst <= 1e-12, worst, "max abs residual");
    }

    {  // Fenchel-Young equality and gap for the identity-coupled losses
        Rng rng = root.split(3);
        double worst_eq = 0.0, worst_gap = 0.0;
        for (LossKind kind : {LossKind::CrossEntropy, LossKind::Squared}) {
            const LossSpec spec = LossSpec::make(kind, {}, 5);
            for (int t = 0; t < 100; ++t) {
                const Tensor h = random_logits(5, rng);
                const double direct = spec.conjugate_loss(h);
                const double via_label = spec.supervised(h, spec.conjugate_pseudolabel(h));
                worst_eq = std::max(worst_eq, std::abs(direct - via_label));
                worst_gap = std::max(worst_gap, spec.fenchel_gap(h));
            }
        }
        suite.record("fenchel_young_equality", worst_eq <= 1e-12, worst_eq, "max abs diff");
        suite.record("fenchel_gap", worst_gap <= 1e-10, worst_gap, "max gap");
    }

    {  // entropy / quadratic / exponential recovery
        Rng rng = root.split(4);
        const LossSpec ce = LossSpec::make(LossKind::CrossEntropy, {}, 5);
        const LossSpec sq = LossSpec::make(LossKind::Squared, {}, 5);
        const LossSpec ex = LossSpec::make(LossKind::Exponential, {}, 2);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Tensor h = random_logits(5, rng);
            worst = std::max(worst,
                             std::abs(ce.conjugate_loss(h) - shannon_entropy(softmax(h))));
            worst = std::max(worst, std::abs(sq.conjugate_loss(h) + 0.5 * squared_norm(h)));
            const Tensor z = random_logits(1, rng, -3.0, 3.0);
            worst = std::max(
                worst, std::abs(ex.conjugate_loss(z) - 2.0 / (std::exp(z[0]) + std::exp(-z[0]))));
        }
        suite.record("conjugate_recovery", worst <= 1e-12, worst, "max abs diff");
    }

    {  // polyloss pseudo-label: stationarity residual and epsilon -> 0 limit
        Rng rng = root.split(5);
        double worst_resid = 0.0, worst_limit = 0.0;
        for (double eps : {0.5, 1.0, 6.0}) {
            const LossSpec poly = LossSpec::make(LossKind::PolyLoss, {eps}, 5);
            for (int t = 0; t < 50; ++t) {
                const Tensor h = random_logits(5, rng);
                worst_resid = std::max(worst_resid, poly.fenchel_gap(h));
            }
        }
        const LossSpec tiny = LossSpec::make(LossKind::PolyLoss, {1e-8}, 5);
        for (int t = 0; t < 100; ++t) {
            const Tensor h = random_logits(5, rng);
            worst_limit =
                std::max(worst_limit, max_abs_diff(tiny.conjugate_pseudolabel(h), softmax(h)));
        }
        suite.record("polyloss_stationarity", worst_resid <= 1e-8, worst_resid, "max residual");
        suite.record("polyloss_limit", worst_limit <= 1e-6, worst_limit, "max abs diff");
    }

    {  // pseudo-label domains
        Rng rng = root.split(6);
        const LossSpec ce = LossSpec::make(LossKind::CrossEntropy, {}, 5);
        const LossSpec ex = LossSpec::make(LossKind::Exponential, {}, 2);
        bool ok = true;
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Tensor y = ce.conjugate_pseudolabel(random_logits(5, rng));
            double s = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) {
                s += y[i];
                if (y[i] < 0.0) ok = false;
            }
            worst = std::max(worst, std::abs(s - 1.0));
            const Tensor yz = ex.conjugate_pseudolabel(random_logits(1, rng, -5.0, 5.0));
            if (!(yz[0] > -1.0 && yz[0] < 1.0)) ok = false;
        }
        suite.record("pseudo_label_domains", ok && worst <= 1e-12, worst, "max simplex residual");
    }

    {  // gradient oracle across the objectives
        Rng rng = root.split(7);
        double worst = 0.0;
        for (LossKind kind :
             {LossKind::CrossEntropy, LossKind::Squared, LossKind::PolyLoss, LossKind::Exponential}) {
            const LossSpec spec =
                LossSpec::make(kind, {kind == LossKind::PolyLoss ? 1.0 : 0.0},
                               kind == LossKind::Exponential ? 2 : 5);
            const std::size_t dim = spec.logit_dim();
            for (int t = 0; t < 5; ++t) {
                Tensor p({dim});
                for (std::size_t i = 0; i < dim; ++i) p[i] = rng.normal(0.0, 2.0);
                const double err = ad::grad_check(
                    [&spec](ad::Graph& g, ad::Graph::NodeId x) {
                        return spec.conjugate_mean_node(g, g.reshape(x, {1, spec.logit_dim()}));
                    },
                    p, 1e-5);
                worst = std::max(worst, err);
            }
        }
        suite.record("conjugate_gradient_oracle", worst < 1e-5, worst, "max rel err");
    }

    {  // Haar orthogonality
        Rng rng = root.split(8);
        const Tensor q = sample_haar_orthogonal(50, rng);
        const Tensor qtq = matmul(transpose(q), q);
        double worst = 0.0;
        for (std::size_t i = 0; i < 50; ++i)
            for (std::size_t j = 0; j < 50; ++j)
                worst = std::max(worst, std::abs(qtq.at(i, j) - (i == j ? 1.0 : 0.0)));
        suite.record("haar_orthogonality", worst <= 1e-10, worst, "max |Q^T Q - I|");
    }

    {  // interpolated covariances stay PSD
        Rng rng = root.split(9);
        GaussianShiftSpec spec;
        spec.dim = 20;
        bool ok = true;
        for (int draw = 0; draw < 10; ++draw) {
            Rng a = rng.split(draw * 2);
            Rng b = rng.split(draw * 2 + 1);
            const ClusterParams source = make_cluster_params(0.0, spec, a);
            const ClusterParams target = make_cluster_params(1.0, spec, b);
            for (double lambda : {0.0, 0.25, 0.5, 0.6, 0.65, 0.7, 1.0}) {
                const ClusterParams mix = interpolate_shift(source, target, lambda);
                ok = ok && linalg::psd_check(mix.sigma_pos) && linalg::psd_check(mix.sigma_neg);
            }
        }
        suite.record("interpolated_covariance_psd", ok, ok ? 1.0 : 0.0, "all PSD");
    }

    {  // conjugate == entropy trajectories for a cross-entropy spec
        Rng rng = root.split(10);
        const LossSpec ce = LossSpec::make(LossKind::CrossEntropy, {}, 2);
        GaussianShiftSpec gspec;
        gspec.dim = 10;
        Rng a = rng.split(0), b = rng.split(1), c = rng.split(2), d = rng.split(3);
        const ClusterParams src = make_cluster_params(0.0, gspec, a);
        const ClusterParams tgt = make_cluster_params(1.0, gspec, b);
        const Dataset stream =
            to_multiclass(sample_dataset(interpolate_shift(src, tgt, 0.6), 100, c));
        Model model = Model::mlp(10, {8, 8}, 2, d);

        TTAConfig cfg;
        cfg.lr = 0.05;
        cfg.temperature = 1.0;
        cfg.mask = ParamMask{MaskMode::BnOnly};
        cfg.batch_size = 20;
        cfg.method = Method::ConjugatePl;
        Model m1 = model;
        const OnlineReport r1 = adapt_online(m1, stream, ce, cfg);
        cfg.method = Method::Entropy;
        Model m2 = model;
        const OnlineReport r2 = adapt_online(m2, stream, ce, cfg);
        const bool ok = m1.checksum() == m2.checksum() &&
                        r1.mean_online_error == r2.mean_online_error;
        suite.record("conjugate_entropy_trajectory_identity", ok, ok ? 0.0 : 1.0,
                     "checksum mismatch");
    }

    {  // BN-only adaptation leaves other parameters bitwise unchanged
        Rng rng = root.split(11);
        Rng d = rng.split(3);
        Model model = Model::mlp(6, {8}, 2, d);
        const LossSpec ce = LossSpec::make(LossKind::CrossEntropy, {}, 2);
        Tensor batch({16, 6});
        for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = rng.normal();
        std::vector<Tensor> before;
        for (const auto& l : model.layers())
            if (l.kind == LayerKind::Affine) before.push_back(l.w);
        TTAConfig cfg;
        cfg.method = Method::Entropy;
        cfg.lr = 0.1;
        cfg.mask = ParamMask{MaskMode::BnOnly};
        cfg.batch_size = 16;
        OptimizerState opt;
        for (int s = 0; s < 10; ++s) tta_step(model, batch, ce, cfg, opt);
        bool ok = true;
        std::size_t idx = 0;
        for (const auto& l : model.layers())
            if (l.kind == LayerKind::Affine) {
                for (std::size_t i = 0; i < l.w.numel(); ++i)
                    ok = ok && l.w[i] == before[idx][i];
                ++idx;
            }
        suite.record("bn_only_mask_isolation", ok, ok ? 0.0 : 1.0, "affine weights changed");
    }

    {  // hard-PL labels are invariant to the temperature
        Rng rng = root.split(12);
        const LossSpec ce = LossSpec::make(LossKind::CrossEntropy, {}, 5);
        bool ok = true;
        for (int t = 0; t < 50; ++t) {
            const Tensor h = random_logits(5, rng);
            std::size_t base_label = argmax(h);
            for (double temp : {1.0, 2.0, 5.0})
                ok = ok && argmax(scale(h, 1.0 / temp)) == base_label;
        }
        suite.record("hard_pl_temperature_invariance", ok, ok ? 0.0 : 1.0, "label flips");
    }

    return suite.results;
}

}  // namespace tta
