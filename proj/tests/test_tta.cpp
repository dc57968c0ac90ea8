// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tta/datagen.hpp"
#include "tta/errors.hpp"
#include "tta/tta_engine.hpp"

using namespace tta;

namespace {

struct Fixture {
    LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 2);
    GaussianShiftSpec gspec;
    ClusterParams src, tgt;
    Dataset stream;
    Model mlp;

    Fixture() : mlp(make_mlp()) {
        gspec.dim = 10;
        Rng a = Rng(101).split(1), b = Rng(101).split(2), c = Rng(101).split(3);
        src = make_cluster_params(0.0, gspec, a);
        tgt = make_cluster_params(1.0, gspec, b);
        stream = to_multiclass(sample_dataset(interpolate_shift(src, tgt, 0.6), 200, c));
    }

    static Model make_mlp() {
        Rng rng(102);
        return Model::mlp(10, {8, 8}, 2, rng);
    }

    TTAConfig config(Method m) const {
        TTAConfig cfg;
        cfg.method = m;
        cfg.lr = 0.05;
        cfg.temperature = 1.0;
        cfg.mask = ParamMask{MaskMode::BnOnly};
        cfg.batch_size = 50;
        if (m == Method::HardPl) cfg.confidence_threshold = 0.9;
        if (m == Method::RobustPl) cfg.q = 0.8;
        return cfg;
    }
};

Tensor row(std::initializer_list<double> v) {
    return Tensor::mat(1, v.size(), std::vector<double>(v));
}

}  // namespace

TEST_CASE("objective values") {
    const LossSpec ce2 = make_loss(LossKind::CrossEntropy, {}, 2);

    SUBCASE("conjugate at uniform logits is ln 2") {
        CHECK(tta_objective(Method::ConjugatePl, ce2, row({0.0, 0.0})) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("robust pl at softmax [0.25, 0.75]") {
        ObjectiveExtras extras;
        extras.q = 0.8;
        const double expected = (1.0 - std::pow(0.75, 0.8)) / 0.8;
        const double got =
            tta_objective(Method::RobustPl, ce2, row({0.0, std::log(3.0)}), extras);
        CHECK(got == doctest::Approx(expected).epsilon(1e-13));
        CHECK(got == doctest::Approx(0.256970).epsilon(1e-5));
    }
    SUBCASE("hard pl below the confidence threshold contributes nothing") {
        ObjectiveExtras extras;
        extras.confidence_threshold = 0.9;
        CHECK(tta_objective(Method::HardPl, ce2, row({0.0, std::log(3.0)}), extras) == 0.0);
    }
    SUBCASE("hard pl above the threshold is the supervised loss at the argmax") {
        ObjectiveExtras extras;
        extras.confidence_threshold = 0.5;
        const Tensor h = row({0.0, std::log(3.0)});
        const double expected = std::log(4.0) - std::log(3.0);  // lse - h_argmax
        CHECK(tta_objective(Method::HardPl, ce2, h, extras) ==
              doctest::Approx(expected).epsilon(1e-13));
    }
}

// soft PL with detached labels evaluates to the entropy H(p) = CE(p, p), but
// its gradient vanishes at the instantaneous label while entropy's does not.
TEST_CASE("soft pl vs entropy: equal values, different gradients") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 5);
    Rng rng(201);
    for (int t = 0; t < 20; ++t) {
        Tensor h({1, 5});
        for (std::size_t i = 0; i < 5; ++i) h[i] = rng.uniform(-6.0, 6.0);

        const double soft = tta_objective(Method::SoftPl, ce, h);
        const double ent = tta_objective(Method::Entropy, ce, h);
        CHECK(std::abs(soft - ent) <= 1e-12);

        ad::Graph g1;
        const auto x1 = g1.leaf(h);
        const auto soft_node = tta_objective_node(g1, Method::SoftPl, ce, x1, {});
        CHECK(max_abs(g1.backward(soft_node)[x1]) <= 1e-13);

        ad::Graph g2;
        const auto x2 = g2.leaf(h);
        const auto ent_node = tta_objective_node(g2, Method::Entropy, ce, x2, {});
        CHECK(max_abs(g2.backward(ent_node)[x2]) > 1e-6);
    }
}

TEST_CASE("conjugate and entropy gradients agree for cross-entropy specs") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 4);
    Rng rng(203);
    for (int t = 0; t < 20; ++t) {
        Tensor h({3, 4});
        for (std::size_t i = 0; i < h.numel(); ++i) h[i] = rng.uniform(-5.0, 5.0);
        ad::Graph g1;
        const auto x1 = g1.leaf(h);
        const auto c = tta_objective_node(g1, Method::ConjugatePl, ce, x1, {});
        ad::Graph g2;
        const auto x2 = g2.leaf(h);
        const auto e = tta_objective_node(g2, Method::Entropy, ce, x2, {});
        CHECK(max_abs_diff(g1.backward(c)[x1], g2.backward(e)[x2]) <= 1e-10);
    }
}

TEST_CASE("squared conjugate gradient equals the negative half norm gradient") {
    const LossSpec sq = make_loss(LossKind::Squared, {}, 4);
    Rng rng(205);
    for (int t = 0; t < 20; ++t) {
        Tensor h({2, 4});
        for (std::size_t i = 0; i < h.numel(); ++i) h[i] = rng.uniform(-5.0, 5.0);
        ad::Graph g1;
        const auto x1 = g1.leaf(h);
        const auto c = tta_objective_node(g1, Method::ConjugatePl, sq, x1, {});
        ad::Graph g2;
        const auto x2 = g2.leaf(h);
        const auto direct = g2.mean_all(g2.scale(g2.sum_rows(g2.mul(x2, x2)), -0.5));
        CHECK(max_abs_diff(g1.backward(c)[x1], g2.backward(direct)[x2]) <= 1e-10);
    }
}

TEST_CASE("config validation") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 2);
    TTAConfig cfg;
    cfg.method = Method::HardPl;
    CHECK_THROWS_AS(validate(cfg, ce), ConfigError);  // missing threshold
    cfg.confidence_threshold = 0.9;
    validate(cfg, ce);
    cfg.q = 0.5;
    CHECK_THROWS_AS(validate(cfg, ce), ConfigError);  // q only for robust_pl
    cfg.method = Method::RobustPl;
    cfg.confidence_threshold.reset();
    validate(cfg, ce);
    cfg.q = 1.5;
    CHECK_THROWS_AS(validate(cfg, ce), ConfigError);
}

TEST_CASE("tta_step no-ops") {
    Fixture fx;
    Tensor batch({16, 10});
    Rng rng(207);
    for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = rng.normal();

    SUBCASE("zero learning rate leaves the model bitwise unchanged") {
        Model m = fx.mlp;
        // BN running stats are still replaced, so compare adaptable params only
        TTAConfig cfg = fx.config(Method::Entropy);
        cfg.lr = 0.0;
        std::vector<Tensor> before;
        for (const auto& r : m.adaptable_params({MaskMode::All})) before.push_back(*r.tensor);
        OptimizerState opt;
        tta_step(m, batch, fx.ce, cfg, opt);
        std::size_t i = 0;
        for (const auto& r : m.adaptable_params({MaskMode::All})) {
            CHECK(max_abs_diff(*r.tensor, before[i]) == 0.0);
            ++i;
        }
    }
    SUBCASE("method none leaves everything bitwise unchanged") {
        Model m = fx.mlp;
        const std::uint64_t before = m.checksum();
        TTAConfig cfg = fx.config(Method::None);
        OptimizerState opt;
        tta_step(m, batch, fx.ce, cfg, opt);
        CHECK(m.checksum() == before);
    }
    SUBCASE("conjugate and entropy steps are bitwise identical") {
        Model m1 = fx.mlp, m2 = fx.mlp;
        OptimizerState o1, o2;
        tta_step(m1, batch, fx.ce, fx.config(Method::ConjugatePl), o1);
        tta_step(m2, batch, fx.ce, fx.config(Method::Entropy), o2);
        CHECK(m1.checksum() == m2.checksum());
    }
}

TEST_CASE("adapt_online") {
    Fixture fx;

    SUBCASE("method none reproduces the unadapted error") {
        Model m = fx.mlp;
        const double unadapted = eval_error(m, fx.stream, StatsMode::UseRunning);
        const OnlineReport r = adapt_online(m, fx.stream, fx.ce, fx.config(Method::None));
        CHECK(r.mean_online_error == doctest::Approx(unadapted).epsilon(1e-15));
    }
    SUBCASE("report mean equals the size-weighted batch mean") {
        Model m = fx.mlp;
        const OnlineReport r = adapt_online(m, fx.stream, fx.ce, fx.config(Method::Entropy));
        double weighted = 0.0;
        std::size_t n = 0;
        for (const auto& b : r.per_batch) {
            weighted += b.error * double(b.size);
            n += b.size;
        }
        CHECK(std::abs(r.mean_online_error - weighted / double(n)) <= 1e-12);
        CHECK(n == fx.stream.labels.size());
    }
    SUBCASE("trajectories under conjugate and entropy are bitwise identical") {
        Model m1 = fx.mlp, m2 = fx.mlp;
        const OnlineReport r1 = adapt_online(m1, fx.stream, fx.ce, fx.config(Method::ConjugatePl));
        const OnlineReport r2 = adapt_online(m2, fx.stream, fx.ce, fx.config(Method::Entropy));
        CHECK(r1.final_model_checksum == r2.final_model_checksum);
        REQUIRE(r1.per_batch.size() == r2.per_batch.size());
        for (std::size_t i = 0; i < r1.per_batch.size(); ++i) {
            CHECK(r1.per_batch[i].loss == r2.per_batch[i].loss);
            CHECK(r1.per_batch[i].error == r2.per_batch[i].error);
        }
    }
    SUBCASE("reruns from the same state are value-identical") {
        Model m1 = fx.mlp, m2 = fx.mlp;
        const OnlineReport r1 = adapt_online(m1, fx.stream, fx.ce, fx.config(Method::RobustPl));
        const OnlineReport r2 = adapt_online(m2, fx.stream, fx.ce, fx.config(Method::RobustPl));
        CHECK(r1.final_model_checksum == r2.final_model_checksum);
        CHECK(r1.mean_online_error == r2.mean_online_error);
    }
    SUBCASE("single perfect batch gives zero online error") {
        // identity-like linear model on its own blob data
        Rng rng(209);
        Model lin = Model::linear(2, 2, rng);
        auto refs = lin.all_params();
        *refs[0].tensor = Tensor::mat(2, 2, {5.0, -5.0, -5.0, 5.0});
        *refs[1].tensor = Tensor::vec({0.0, 0.0});
        Dataset d;
        d.inputs = Tensor::mat(4, 2, {1, -1, 1, -1, -1, 1, -1, 1});
        d.labels = {0, 0, 1, 1};
        TTAConfig cfg;
        cfg.method = Method::Entropy;
        cfg.lr = 0.01;
        cfg.mask = ParamMask{MaskMode::All};
        cfg.batch_size = 4;
        const OnlineReport r = adapt_online(lin, d, make_loss(LossKind::CrossEntropy, {}, 2), cfg);
        CHECK(r.mean_online_error == 0.0);
        CHECK(r.per_batch.size() == 1);
    }
    SUBCASE("bn-only masking leaves non-BN parameters bitwise unchanged") {
        Model m = fx.mlp;
        std::vector<Tensor> before;
        for (const auto& l : m.layers())
            if (l.kind == LayerKind::Affine) {
                before.push_back(l.w);
                before.push_back(l.b);
            }
        adapt_online(m, fx.stream, fx.ce, fx.config(Method::ConjugatePl));
        std::size_t i = 0;
        for (const auto& l : m.layers())
            if (l.kind == LayerKind::Affine) {
                CHECK(max_abs_diff(l.w, before[i++]) == 0.0);
                CHECK(max_abs_diff(l.b, before[i++]) == 0.0);
            }
    }
    SUBCASE("precomputed labels adapt differently but deterministically") {
        Model m1 = fx.mlp, m2 = fx.mlp;
        TTAConfig cfg = fx.config(Method::ConjugatePl);
        cfg.precomputed_labels = true;
        const OnlineReport r1 = adapt_online(m1, fx.stream, fx.ce, cfg);
        Model m3 = fx.mlp;
        const OnlineReport r2 = adapt_online(m3, fx.stream, fx.ce, cfg);
        CHECK(r1.final_model_checksum == r2.final_model_checksum);
        const OnlineReport inst = adapt_online(m2, fx.stream, fx.ce, fx.config(Method::ConjugatePl));
        CHECK(r1.final_model_checksum != inst.final_model_checksum);
    }
}

TEST_CASE("hard pl labels are invariant to the temperature") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 6);
    Rng rng(211);
    for (int t = 0; t < 30; ++t) {
        Tensor h({6});
        for (std::size_t i = 0; i < 6; ++i) h[i] = rng.uniform(-4.0, 4.0);
        const std::size_t base = argmax(h);
        for (double temp : {1.0, 2.0, 5.0}) CHECK(argmax(scale(h, 1.0 / temp)) == base);
    }
}

// dividing h by T scales the squared conjugate objective; the update direction
// is unchanged (cosine similarity 1 against the T=1 gradient)
TEST_CASE("squared-loss temperature folds into the learning rate") {
    const LossSpec sq = make_loss(LossKind::Squared, {}, 3);
    Rng rng(213);
    Model lin = [] {
        Rng r(214);
        return Model::linear(4, 3, r);
    }();
    Tensor batch({8, 4});
    for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = rng.normal();

    auto gradient_at = [&](double temperature) {
        ad::Graph g;
        const auto build = lin.build_forward(g, batch, StatsMode::UseRunning,
                                             ParamMask{MaskMode::All});
        const auto h_bar = g.scale(build.logits, 1.0 / temperature);
        const auto obj = tta_objective_node(g, Method::ConjugatePl, sq, h_bar, {});
        const auto grads = g.backward(obj);
        std::vector<double> flat;
        for (const auto& [name, node] : build.leaves)
            for (double v : grads[node].data()) flat.push_back(v);
        return flat;
    };

    const auto g1 = gradient_at(1.0);
    for (double temperature : {2.0, 5.0}) {
        const auto gt = gradient_at(temperature);
        double num = 0.0, n1 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < g1.size(); ++i) {
            num += g1[i] * gt[i];
            n1 += g1[i] * g1[i];
            n2 += gt[i] * gt[i];
        }
        CHECK(std::abs(num / std::sqrt(n1 * n2) - 1.0) <= 1e-10);
    }
}

TEST_CASE("grid search") {
    Fixture fx;
    std::vector<Dataset> streams = {fx.stream};

    SUBCASE("single cell returns that pair") {
        TTAConfig base = fx.config(Method::Entropy);
        const GridResult r = grid_search(fx.mlp, fx.ce, streams, {0.01}, {2.0}, base);
        CHECK(r.best_lr == 0.01);
        CHECK(r.best_temperature == 2.0);
        CHECK(r.best_error == r.errors.at(0, 0));
    }
    SUBCASE("diverging cell records error 1.0 and the search completes") {
        // the squared conjugate is unbounded below, so an absurd lr overflows
        const LossSpec sq = make_loss(LossKind::Squared, {}, 2);
        TTAConfig base = fx.config(Method::ConjugatePl);
        const GridResult r = grid_search(fx.mlp, sq, streams, {1e200, 0.01}, {1.0}, base);
        CHECK(r.errors.at(0, 0) == 1.0);
        CHECK(r.best_lr == 0.01);
    }
    SUBCASE("ties break toward smaller lr, then smaller T") {
        // method none ignores lr and T entirely, so every cell ties
        TTAConfig base = fx.config(Method::None);
        const GridResult r =
            grid_search(fx.mlp, fx.ce, streams, {0.1, 0.01}, {3.0, 1.0}, base);
        CHECK(r.best_lr == 0.01);
        CHECK(r.best_temperature == 1.0);
    }
    SUBCASE("grid search is deterministic") {
        TTAConfig base = fx.config(Method::ConjugatePl);
        const GridResult a =
            grid_search(fx.mlp, fx.ce, streams, {0.1, 0.01}, {1.0, 2.0}, base);
        const GridResult b =
            grid_search(fx.mlp, fx.ce, streams, {0.1, 0.01}, {1.0, 2.0}, base);
        CHECK(max_abs_diff(a.errors, b.errors) == 0.0);
        CHECK(a.best_lr == b.best_lr);
        CHECK(a.best_temperature == b.best_temperature);
    }
}

TEST_CASE("objective gradient oracle with labels held constant") {
    Rng rng(215);
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 5);

    // freeze labels from an independent reference point so the frozen-label
    // function has a well-scaled gradient at the probe points
    Tensor ref({1, 5});
    for (std::size_t i = 0; i < 5; ++i) ref[i] = rng.normal(0.0, 2.0);
    Rng model_rng(216);
    Model probe_model = Model::linear(5, 5, model_rng);
    FrozenLabels frozen;

    for (Method method : {Method::Entropy, Method::SoftPl, Method::HardPl, Method::RobustPl}) {
        TTAConfig cfg;
        cfg.method = method;
        if (method == Method::HardPl) cfg.confidence_threshold = 0.0;
        if (method == Method::RobustPl) cfg.q = 0.8;
        frozen = freeze_labels(probe_model, ref, ce, cfg);
        for (int t = 0; t < 20; ++t) {
            Tensor p({5});
            for (std::size_t i = 0; i < 5; ++i) p[i] = rng.normal(0.0, 2.0);
            ObjectiveExtras extras;
            extras.confidence_threshold = cfg.confidence_threshold;
            extras.q = cfg.q;
            const FrozenLabels* fl = method == Method::Entropy ? nullptr : &frozen;
            const double err = ad::grad_check(
                [&](ad::Graph& g, ad::Graph::NodeId x) {
                    ObjectiveExtras e = extras;
                    e.frozen = fl;
                    return tta_objective_node(g, method, ce, g.reshape(x, {1, 5}), e);
                },
                p, 1e-5);
            CHECK(err < 1e-5);
        }
    }
}
