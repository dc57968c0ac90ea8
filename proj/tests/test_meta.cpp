// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tta/bench.hpp"
#include "tta/datagen.hpp"
#include "tta/errors.hpp"
#include "tta/linalg.hpp"
#include "tta/meta_loss.hpp"

using namespace tta;

namespace {

Model small_linear(std::size_t in, std::size_t out, std::uint64_t seed, double shrink = 1.0) {
    Rng rng(seed);
    Model m = Model::linear(in, out, rng);
    if (shrink != 1.0)
        for (auto& ref : m.all_params())
            for (std::size_t i = 0; i < ref.tensor->numel(); ++i) (*ref.tensor)[i] *= shrink;
    return m;
}

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    Tensor x({rows, cols});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal(0.0, sd);
    return x;
}

ShiftPair tiny_pair(std::uint64_t seed) {
    ShiftPair pair;
    pair.unlabeled = random_batch(12, 4, seed);
    pair.labeled_inputs = random_batch(12, 4, seed + 1);
    Rng rng(seed + 2);
    pair.labeled_targets.resize(12);
    for (auto& t : pair.labeled_targets) t = int(rng.below(2));
    return pair;
}

MetaConfig tiny_config(double alpha = 0.2, double fd = 1e-3) {
    MetaConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = 0.1;
    cfg.iterations = 3;
    cfg.task_loss = make_loss(LossKind::CrossEntropy, {}, 2);
    cfg.fd_step = fd;
    cfg.mask = ParamMask{MaskMode::All};
    return cfg;
}

// Sum over classes of the j-th hidden feature, extracted by pointing the net's
// final layer at a basis vector. Used to ridge-regress the final layer.
std::vector<double> summed_features(MetaLossNet net, const Tensor& logits) {
    const std::size_t width = net.hidden();
    const std::size_t pc = net.param_count();
    auto params = net.flatten();
    const std::size_t w3_at = pc - width - 1;
    for (std::size_t j = 0; j < width + 1; ++j) params[w3_at + j] = 0.0;
    std::vector<double> feats(width + 1);
    for (std::size_t j = 0; j < width; ++j) {
        params[w3_at + j] = 1.0;
        net.unflatten(params);
        feats[j] = net.eval(logits);
        params[w3_at + j] = 0.0;
    }
    feats[width] = double(net.num_classes());  // bias enters once per class
    return feats;
}

}  // namespace

TEST_CASE("meta loss net structure") {
    Rng rng(1);
    MetaLossNet net = MetaLossNet::create(2, 8, rng, true);
    CHECK(net.param_count() == 105);
    CHECK(net.param_count() <= 512);
    CHECK_THROWS_AS(MetaLossNet::create(2, 17, rng, true), ConfigError);

    SUBCASE("zero final layer evaluates to zero everywhere") {
        Rng prng(2);
        for (int t = 0; t < 10; ++t) {
            Tensor h({2});
            h[0] = prng.normal(0.0, 3.0);
            h[1] = prng.normal(0.0, 3.0);
            CHECK(net.eval(h) == 0.0);
        }
    }
    SUBCASE("permutation invariance by construction") {
        // mathematically exact; summation order leaves last-ulp noise for K >= 3
        Rng nrng(3);
        MetaLossNet dense = MetaLossNet::create(3, 8, nrng, false);
        Rng prng(4);
        for (int t = 0; t < 20; ++t) {
            Tensor h({3});
            for (int i = 0; i < 3; ++i) h[i] = prng.normal(0.0, 2.0);
            const double base = dense.eval(h);
            CHECK(dense.eval(Tensor::vec({h[1], h[2], h[0]})) ==
                  doctest::Approx(base).epsilon(1e-12));
            CHECK(dense.eval(Tensor::vec({h[2], h[0], h[1]})) ==
                  doctest::Approx(base).epsilon(1e-12));
        }
    }
    SUBCASE("uniform logit shifts move the output within an empirical Lipschitz bound") {
        Rng nrng(5);
        MetaLossNet dense = MetaLossNet::create(2, 8, nrng, false);
        const Tensor h = Tensor::vec({0.3, -0.7});
        // sample directional slopes over a box covering the shift segment
        Rng prng(6);
        double lipschitz = 0.0;
        for (int t = 0; t < 500; ++t) {
            Tensor p({2});
            p[0] = h[0] + prng.uniform(-0.3, 1.3);
            p[1] = h[1] + prng.uniform(-0.3, 1.3);
            const double angle = prng.uniform(0.0, 6.283185307179586);
            const double delta = 1e-3;
            Tensor q({2});
            q[0] = p[0] + delta * std::cos(angle);
            q[1] = p[1] + delta * std::sin(angle);
            lipschitz = std::max(lipschitz, std::abs(dense.eval(q) - dense.eval(p)) / delta);
        }
        for (double c : {0.25, 0.5, 1.0}) {
            const Tensor shifted = Tensor::vec({h[0] + c, h[1] + c});
            CHECK(std::abs(dense.eval(shifted) - dense.eval(h)) <=
                  lipschitz * c * std::sqrt(2.0) * 1.15 + 1e-9);
        }
    }
    SUBCASE("persistence round-trips") {
        Rng nrng(7);
        MetaLossNet dense = MetaLossNet::create(2, 8, nrng, false);
        const MetaLossNet loaded = MetaLossNet::from_json_string(dense.to_json_string());
        const Tensor h = Tensor::vec({0.5, -1.5});
        CHECK(loaded.eval(h) == dense.eval(h));
        CHECK(loaded.param_count() == dense.param_count());
    }
}

TEST_CASE("inner update no-ops") {
    const Tensor batch = random_batch(10, 4, 11);
    SUBCASE("alpha = 0") {
        Model m = small_linear(4, 2, 12);
        const std::uint64_t before = m.checksum();
        Rng nrng(13);
        MetaLossNet dense = MetaLossNet::create(2, 8, nrng, false);
        inner_update(m, batch, dense, 0.0, {MaskMode::All});
        CHECK(m.checksum() == before);
    }
    SUBCASE("zero net has zero gradient") {
        Model m = small_linear(4, 2, 14);
        const std::uint64_t before = m.checksum();
        Rng nrng(15);
        MetaLossNet zero = MetaLossNet::create(2, 8, nrng, true);
        inner_update(m, batch, zero, 0.5, {MaskMode::All});
        CHECK(m.checksum() == before);
    }
}

// Regress the net's final layer so it reproduces softmax entropy on a small
// logit region, then compare an inner update against an entropy tta_step.
TEST_CASE("a net emulating entropy reproduces the entropy adaptation step") {
    // model with small weights keeps the batch logits in a small ball
    Model model = small_linear(4, 2, 21, 0.05);
    const Tensor batch = random_batch(24, 4, 22);
    const Tensor logits = model.forward(batch, StatsMode::UseRunning);

    Rng nrng(23);
    MetaLossNet net = MetaLossNet::create(2, 16, nrng, true);
    const std::size_t width = net.hidden();

    // fitting cloud: batch logits plus jitter, so value closeness implies
    // gradient closeness over the region the step actually probes
    std::vector<Tensor> cloud;
    Rng jitter(24);
    for (std::size_t i = 0; i < logits.rows(); ++i)
        for (int rep = 0; rep < 8; ++rep) {
            Tensor h({2});
            h[0] = logits.at(i, 0) + 0.03 * jitter.normal();
            h[1] = logits.at(i, 1) + 0.03 * jitter.normal();
            cloud.push_back(h);
        }

    const std::size_t n = cloud.size(), k = width + 1;
    Tensor design({n, k});
    Tensor target({n});
    for (std::size_t i = 0; i < n; ++i) {
        const auto feats = summed_features(net, cloud[i]);
        for (std::size_t j = 0; j < k; ++j) design.at(i, j) = feats[j];
        target[i] = shannon_entropy(softmax(cloud[i]));
    }
    Tensor ata({k, k});
    Tensor atb({k});
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += design.at(i, a) * design.at(i, b);
            ata.at(a, b) = s + (a == b ? 1e-10 : 0.0);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += design.at(i, a) * target[i];
        atb[a] = s;
    }
    const Tensor coef = linalg::solve(ata, atb);
    auto params = net.flatten();
    const std::size_t w3_at = net.param_count() - width - 1;
    for (std::size_t j = 0; j < k; ++j) params[w3_at + j] = coef[j];
    net.unflatten(params);

    // oracle precondition: the fit emulates entropy on the batch to 1e-6
    double fit_err = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const Tensor h = Tensor::vec({logits.at(i, 0), logits.at(i, 1)});
        fit_err = std::max(fit_err, std::abs(net.eval(h) - shannon_entropy(softmax(h))));
    }
    REQUIRE(fit_err <= 1e-6);

    const double alpha = 1e-3;
    Model via_net = model;
    inner_update(via_net, batch, net, alpha, {MaskMode::All});

    Model via_entropy = model;
    TTAConfig cfg;
    cfg.method = Method::Entropy;
    cfg.lr = alpha;
    cfg.temperature = 1.0;
    cfg.mask = ParamMask{MaskMode::All};
    cfg.batch_size = batch.rows();
    OptimizerState opt;
    tta_step(via_entropy, batch, make_loss(LossKind::CrossEntropy, {}, 2), cfg, opt);

    auto pa = via_net.all_params();
    auto pb = via_entropy.all_params();
    double worst = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i)
        worst = std::max(worst, max_abs_diff(*pa[i].tensor, *pb[i].tensor));
    CHECK(worst <= 1e-4);
}

TEST_CASE("outer gradient") {
    const ShiftPair pair = tiny_pair(31);
    const Model model = small_linear(4, 2, 32);

    SUBCASE("an all-zero net has an exactly zero outer gradient") {
        Rng nrng(33);
        MetaLossNet zero = MetaLossNet::create(2, 8, nrng, true);
        zero.unflatten(std::vector<double>(zero.param_count(), 0.0));
        const auto grad = outer_gradient(zero, model, pair, tiny_config());
        for (double g : grad) CHECK(std::abs(g) <= 1e-12);
    }
    SUBCASE("each coordinate is the central difference by definition") {
        Rng nrng(34);
        MetaLossNet net = MetaLossNet::create(2, 8, nrng, false);
        const MetaConfig cfg = tiny_config();
        const auto grad = outer_gradient(net, model, pair, cfg);
        for (std::size_t idx : {std::size_t(0), std::size_t(40), net.param_count() - 1}) {
            MetaLossNet probe = net;
            probe.param(idx) += cfg.fd_step;
            const double up = outer_objective(probe, model, pair, cfg);
            probe.param(idx) -= 2.0 * cfg.fd_step;
            const double down = outer_objective(probe, model, pair, cfg);
            CHECK(grad[idx] == (up - down) / (2.0 * cfg.fd_step));
        }
    }
    SUBCASE("halving the step behaves like O(step^2) truncation") {
        Rng nrng(35);
        MetaLossNet net = MetaLossNet::create(2, 8, nrng, false);
        MetaConfig cfg = tiny_config(0.8, 2e-2);
        const auto g1 = outer_gradient(net, model, pair, cfg);
        cfg.fd_step /= 2.0;
        const auto g2 = outer_gradient(net, model, pair, cfg);
        cfg.fd_step /= 2.0;
        const auto g3 = outer_gradient(net, model, pair, cfg);
        double d12 = 0.0, d23 = 0.0;
        for (std::size_t i = 0; i < g1.size(); ++i) {
            d12 = std::max(d12, std::abs(g1[i] - g2[i]));
            d23 = std::max(d23, std::abs(g2[i] - g3[i]));
        }
        REQUIRE(d23 > 0.0);
        const double ratio = d12 / d23;
        CHECK(ratio > 4.0 / 8.0);
        CHECK(ratio < 4.0 * 8.0);
    }
    SUBCASE("probes restore state: consecutive calls are bitwise identical") {
        Rng nrng(36);
        MetaLossNet net = MetaLossNet::create(2, 8, nrng, false);
        const auto before = net.flatten();
        const auto g1 = outer_gradient(net, model, pair, tiny_config());
        const auto g2 = outer_gradient(net, model, pair, tiny_config());
        CHECK(net.flatten() == before);
        CHECK(g1 == g2);
    }
}

TEST_CASE("meta_train determinism and bookkeeping") {
    const std::vector<ShiftPair> pairs = {tiny_pair(41), tiny_pair(43)};
    const Model model = small_linear(4, 2, 42);

    SUBCASE("zero iterations returns the net bitwise unchanged") {
        Rng nrng(44);
        MetaLossNet net = MetaLossNet::create(2, 8, nrng, false);
        const auto before = net.flatten();
        MetaConfig cfg = tiny_config();
        cfg.iterations = 0;
        const MetaTrainResult r = meta_train(net, model, pairs, cfg);
        CHECK(r.net.flatten() == before);
        CHECK(r.objective_trajectory.size() == 1);
    }
    SUBCASE("identical inputs give bitwise-identical training runs") {
        Rng nrng(45);
        MetaLossNet net = MetaLossNet::create(2, 8, nrng, true);
        const MetaTrainResult a = meta_train(net, model, pairs, tiny_config());
        const MetaTrainResult b = meta_train(net, model, pairs, tiny_config());
        CHECK(a.net.flatten() == b.net.flatten());
        CHECK(a.objective_trajectory == b.objective_trajectory);
    }
}

TEST_CASE("slice export") {
    const LossSpec ce2 = make_loss(LossKind::CrossEntropy, {}, 2);
    SUBCASE("entropy slice is symmetric with max ln 2 at zero") {
        const auto curve = slice_export(objective_slice_fn(Method::Entropy, ce2, 1.0),
                                        Tensor::vec({0.0, 0.0}), 0, -5.0, 5.0, 41);
        REQUIRE(curve.size() == 41);
        CHECK(curve[20].x == 0.0);
        CHECK(curve[20].loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        for (std::size_t i = 0; i < curve.size(); ++i) {
            CHECK(curve[i].loss <= std::log(2.0) + 1e-12);
            CHECK(std::abs(curve[i].loss - curve[curve.size() - 1 - i].loss) <= 1e-12);
        }
    }
    SUBCASE("squared conjugate slice is the negative half parabola") {
        const LossSpec sq2 = make_loss(LossKind::Squared, {}, 2);
        const auto curve = slice_export(objective_slice_fn(Method::ConjugatePl, sq2, 1.0),
                                        Tensor::vec({0.0, 0.0}), 0, -3.0, 3.0, 25);
        for (const auto& p : curve)
            CHECK(p.loss == doctest::Approx(-0.5 * p.x * p.x).epsilon(1e-12));
    }
    SUBCASE("zero net slices to the zero curve") {
        Rng nrng(51);
        const MetaLossNet zero = MetaLossNet::create(2, 8, nrng, true);
        const auto curve =
            slice_export(net_slice_fn(zero), Tensor::vec({0.0, 0.0}), 0, -4.0, 4.0, 11);
        for (const auto& p : curve) CHECK(p.loss == 0.0);
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(slice_export(net_slice_fn(MetaLossNet::create(
                                         2, 8, *std::make_unique<Rng>(52), true)),
                                     Tensor::vec({0.0, 0.0}), 5, -1.0, 1.0, 11),
                        DimensionError);
        CHECK_THROWS_AS(slice_export([](const Tensor&) { return 0.0; }, Tensor::vec({0.0}), 0,
                                     -1.0, 1.0, 1),
                        ConfigError);
    }
}

TEST_CASE("template fitting") {
    const Tensor base = Tensor::vec({0.0, 0.0});
    SUBCASE("recovers a synthesized scaled entropy curve") {
        std::vector<SlicePoint> curve;
        for (int i = 0; i < 41; ++i) {
            const double x = -5.0 + 10.0 * i / 40.0;
            const double h = shannon_entropy(softmax(Tensor::vec({x / 3.0, 0.0})));
            curve.push_back({x, 2.0 * h + 0.7});
        }
        const FittedEntropyParams fit = fit_scaled_entropy(curve, base, 0);
        CHECK(std::abs(fit.alpha_mag - 2.0) / 2.0 < 0.01);
        CHECK(std::abs(fit.temperature - 3.0) / 3.0 < 0.05);
        CHECK(std::abs(fit.offset - 0.7) < 0.05);
        CHECK(fit.residual < 1e-6);
    }
    SUBCASE("constant curve returns alpha 0 with zero residual") {
        std::vector<SlicePoint> curve;
        for (int i = 0; i < 20; ++i) curve.push_back({double(i), 1.25});
        const FittedEntropyParams fit = fit_scaled_entropy(curve, base, 0);
        CHECK(fit.alpha_mag == 0.0);
        CHECK(fit.residual == 0.0);
    }
    SUBCASE("a parabola prefers the quadratic template by a wide margin") {
        std::vector<SlicePoint> curve;
        for (int i = 0; i < 41; ++i) {
            const double x = -5.0 + 10.0 * i / 40.0;
            curve.push_back({x, -0.5 * x * x});
        }
        const FittedEntropyParams ent = fit_scaled_entropy(curve, base, 0);
        const QuadraticFit quad = fit_quadratic(curve);
        CHECK(quad.residual < 1e-12);
        CHECK(ent.residual > 10.0 * std::max(quad.residual, 1e-12));
        CHECK(quad.a == doctest::Approx(-0.5).epsilon(1e-9));
    }
}

TEST_CASE("pearson correlation") {
    CHECK(pearson_correlation({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson_correlation({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(std::abs(pearson_correlation({1, 2, 1, 2}, {5, 5, 6, 6})) < 0.75);
}
