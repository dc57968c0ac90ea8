// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tta/autodiff.hpp"
#include "tta/errors.hpp"
#include "tta/losses.hpp"
#include "tta/rng.hpp"

using namespace tta;

namespace {

Tensor random_logits(std::size_t k, Rng& rng, double lo = -10.0, double hi = 10.0) {
    Tensor h({k});
    for (std::size_t i = 0; i < k; ++i) h[i] = rng.uniform(lo, hi);
    return h;
}

Tensor single_row(const Tensor& v) { return Tensor::mat(1, v.numel(), v.data()); }

}  // namespace

TEST_CASE("make_loss validation and potentials") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 2);
    CHECK(ce.f(Tensor::vec({0.0, 0.0})) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    const LossSpec sq = make_loss(LossKind::Squared, {}, 2);
    CHECK(sq.f(Tensor::vec({1.0, 2.0})) == doctest::Approx(2.5).epsilon(1e-15));

    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    CHECK(ex.f(Tensor::vec({0.0})) == doctest::Approx(1.0).epsilon(1e-15));   // cosh(0)
    CHECK(ex.g(Tensor::vec({0.0}))[0] == doctest::Approx(0.0).epsilon(1e-15));  // sinh(0)

    CHECK_THROWS_AS(parse_loss_kind("triangular"), ConfigError);
    CHECK_THROWS_AS(make_loss(LossKind::PolyLoss, {-0.5}, 5), ConfigError);
    CHECK_THROWS_AS(make_loss(LossKind::CrossEntropy, {}, 1), ConfigError);
    CHECK_THROWS_AS(make_loss(LossKind::Exponential, {}, 5), ConfigError);
}

TEST_CASE("supervised loss examples") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 2);
    CHECK(supervised_loss(ce, Tensor::vec({0.0, 0.0}), Tensor::vec({1.0, 0.0})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    CHECK(supervised_loss(ex, Tensor::vec({1.0}), Tensor::vec({1.0})) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

    // L_ce + eps * y^T (1 - softmax(h)) with softmax = [.5,.5]
    const LossSpec poly = make_loss(LossKind::PolyLoss, {1.0}, 2);
    CHECK(supervised_loss(poly, Tensor::vec({0.0, 0.0}), Tensor::vec({1.0, 0.0})) ==
          doctest::Approx(std::log(2.0) + 0.5).epsilon(1e-14));

    CHECK_THROWS_AS(supervised_loss(ce, Tensor::vec({0.0, 0.0}), Tensor::vec({1.0})),
                    DimensionError);
}

TEST_CASE("expanded exponential form equals exp(-y z)") {
    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const double z = rng.uniform(-3.0, 3.0);
        for (double y : {-1.0, 1.0}) {
            const double expanded = supervised_loss(ex, Tensor::vec({z}), Tensor::vec({y}));
            CHECK(expanded == doctest::Approx(std::exp(-y * z)).epsilon(1e-13));
        }
    }
}

TEST_CASE("conjugate pseudo-label examples") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 2);
    const Tensor y1 = conjugate_pseudolabel(ce, Tensor::vec({0.0, std::log(3.0)}));
    CHECK(y1[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y1[1] == doctest::Approx(0.75).epsilon(1e-12));

    // 2x2 system (I + diag(z) - z z^T) y = z at z = [.5,.5]:
    // [[1.25,-0.25],[-0.25,1.25]] y = [.5,.5] has the solution [.5,.5]
    const LossSpec poly = make_loss(LossKind::PolyLoss, {1.0}, 2);
    const Tensor y2 = conjugate_pseudolabel(poly, Tensor::vec({0.0, 0.0}));
    CHECK(y2[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y2[1] == doctest::Approx(0.5).epsilon(1e-12));

    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    CHECK(conjugate_pseudolabel(ex, Tensor::vec({1.0}))[0] ==
          doctest::Approx(std::tanh(1.0)).epsilon(1e-14));
}

TEST_CASE("conjugate loss examples") {
    const LossSpec ce2 = make_loss(LossKind::CrossEntropy, {}, 2);
    CHECK(conjugate_loss(ce2, Tensor::vec({0.0, 0.0})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    // -(0.25 ln 0.25 + 0.75 ln 0.75)
    CHECK(conjugate_loss(ce2, Tensor::vec({0.0, std::log(3.0)})) ==
          doctest::Approx(0.5623351446188083).epsilon(1e-12));

    const LossSpec sq = make_loss(LossKind::Squared, {}, 2);
    CHECK(conjugate_loss(sq, Tensor::vec({1.0, 2.0})) == doctest::Approx(-2.5).epsilon(1e-15));

    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    CHECK(conjugate_loss(ex, Tensor::vec({1.0})) ==
          doctest::Approx(1.0 / std::cosh(1.0)).epsilon(1e-13));
    CHECK(conjugate_loss(ex, Tensor::vec({1.0})) == doctest::Approx(0.648054).epsilon(1e-6));
}

TEST_CASE("fenchel gap") {
    Rng rng(17);
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 5);
    for (int t = 0; t < 100; ++t) CHECK(fenchel_gap(ce, random_logits(5, rng)) <= 1e-10);

    const LossSpec sq = make_loss(LossKind::Squared, {}, 2);
    CHECK(fenchel_gap(sq, Tensor::vec({1.0, 2.0})) == 0.0);

    for (std::size_t k : {2u, 5u, 10u}) {
        const LossSpec poly = make_loss(LossKind::PolyLoss, {1.0}, k);
        for (int t = 0; t < 50; ++t) CHECK(fenchel_gap(poly, random_logits(k, rng)) < 1e-8);
    }
}

TEST_CASE("conjugate of f restricted to the simplex") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 3);
    // on-simplex input: negative entropy
    const Tensor p = Tensor::vec({0.2, 0.3, 0.5});
    CHECK(ce.conjugate_of_f(p) == doctest::Approx(-shannon_entropy(p)).epsilon(1e-14));
    CHECK_THROWS_AS(ce.conjugate_of_f(Tensor::vec({0.2, 0.3, 0.6})), DomainError);
    CHECK_THROWS_AS(ce.conjugate_of_f(Tensor::vec({-0.1, 0.6, 0.5})), DomainError);
}

TEST_CASE("Fenchel-Young equality at seeded points") {
    Rng rng(23);
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::Squared}) {
        const LossSpec spec = make_loss(kind, {}, 5);
        for (int t = 0; t < 100; ++t) {
            const Tensor h = random_logits(5, rng);
            const double direct = conjugate_loss(spec, h);
            const double via_label = supervised_loss(spec, h, conjugate_pseudolabel(spec, h));
            CHECK(std::abs(direct - via_label) <= 1e-12);
        }
    }
}

TEST_CASE("recovery identities") {
    Rng rng(29);
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 5);
    const LossSpec sq = make_loss(LossKind::Squared, {}, 5);
    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    for (int t = 0; t < 100; ++t) {
        const Tensor h = random_logits(5, rng);
        CHECK(std::abs(conjugate_loss(ce, h) - shannon_entropy(softmax(h))) <= 1e-12);
        CHECK(std::abs(conjugate_loss(sq, h) + 0.5 * squared_norm(h)) <= 1e-12);
        const Tensor z = random_logits(1, rng, -3.0, 3.0);
        CHECK(std::abs(conjugate_loss(ex, z) - 2.0 / (std::exp(z[0]) + std::exp(-z[0]))) <= 1e-12);
    }
}

TEST_CASE("polyloss pseudo-label approaches softmax as epsilon -> 0") {
    Rng rng(31);
    const LossSpec tiny = make_loss(LossKind::PolyLoss, {1e-8}, 5);
    for (int t = 0; t < 100; ++t) {
        const Tensor h = random_logits(5, rng);
        CHECK(max_abs_diff(tiny.conjugate_pseudolabel(h), softmax(h)) < 1e-6);
    }
}

TEST_CASE("pseudo-label domains") {
    Rng rng(37);
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 5);
    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    for (int t = 0; t < 100; ++t) {
        const Tensor y = conjugate_pseudolabel(ce, random_logits(5, rng));
        ce.validate_label(y, 1e-12);
        const Tensor z = conjugate_pseudolabel(ex, random_logits(1, rng, -8.0, 8.0));
        ex.validate_label(z);
        CHECK(z[0] > -1.0);
        CHECK(z[0] < 1.0);
    }
    CHECK_THROWS_AS(ex.validate_label(Tensor::vec({1.0})), DomainError);
}

TEST_CASE("sampled midpoint convexity of every potential") {
    Rng rng(41);
    for (LossKind kind :
         {LossKind::CrossEntropy, LossKind::Squared, LossKind::PolyLoss, LossKind::Exponential}) {
        const LossSpec spec = make_loss(kind, {kind == LossKind::PolyLoss ? 2.0 : 0.0},
                                        kind == LossKind::Exponential ? 2 : 4);
        const std::size_t dim = spec.logit_dim();
        for (int t = 0; t < 50; ++t) {
            const Tensor a = random_logits(dim, rng, -6.0, 6.0);
            const Tensor b = random_logits(dim, rng, -6.0, 6.0);
            const Tensor mid = scale(add(a, b), 0.5);
            CHECK(spec.f(mid) <= 0.5 * (spec.f(a) + spec.f(b)) + 1e-10);
        }
    }
}

TEST_CASE("gradient consistency of the conjugate objectives") {
    Rng rng(43);
    for (LossKind kind :
         {LossKind::CrossEntropy, LossKind::Squared, LossKind::PolyLoss, LossKind::Exponential}) {
        const LossSpec spec = make_loss(kind, {kind == LossKind::PolyLoss ? 1.0 : 0.0},
                                        kind == LossKind::Exponential ? 2 : 5);
        const std::size_t dim = spec.logit_dim();
        for (int t = 0; t < 20; ++t) {
            Tensor p({dim});
            for (std::size_t i = 0; i < dim; ++i) p[i] = rng.normal(0.0, 2.0);
            const double err = ad::grad_check(
                [&spec, dim](ad::Graph& g, ad::Graph::NodeId x) {
                    return spec.conjugate_mean_node(g, g.reshape(x, {1, dim}));
                },
                p, 1e-5);
            CHECK(err < 1e-5);
        }
    }
}

// The two expression routes for the identity-coupled conjugate loss: the
// supervised form with the label kept inside the graph, and the direct
// closed form. Values and gradients must agree.
TEST_CASE("flow-through label route equals the direct conjugate route") {
    Rng rng(47);
    SUBCASE("cross-entropy: supervised-at-softmax vs -sum p log p") {
        const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 5);
        for (int t = 0; t < 20; ++t) {
            const Tensor h = single_row(random_logits(5, rng, -6.0, 6.0));
            ad::Graph g1;
            const auto x1 = g1.leaf(h);
            const auto via_label = ce.conjugate_mean_node(g1, x1);
            ad::Graph g2;
            const auto x2 = g2.leaf(h);
            const auto p = g2.softmax_rows(x2);
            const auto direct = g2.scale(g2.sum_all(g2.mul(p, g2.log(p))), -1.0);
            CHECK(std::abs(g1.value(via_label).value() - g2.value(direct).value()) <= 1e-12);
            CHECK(max_abs_diff(g1.backward(via_label)[x1], g2.backward(direct)[x2]) <= 1e-10);
        }
    }
    SUBCASE("squared: supervised-at-h vs -0.5 |h|^2") {
        const LossSpec sq = make_loss(LossKind::Squared, {}, 5);
        for (int t = 0; t < 20; ++t) {
            const Tensor h = single_row(random_logits(5, rng, -6.0, 6.0));
            ad::Graph g1;
            const auto x1 = g1.leaf(h);
            // supervised expression with the label in-graph: 0.5|h|^2 - h.h
            const auto half = g1.scale(g1.sum_rows(g1.mul(x1, x1)), 0.5);
            const auto full = g1.sum_rows(g1.mul(x1, x1));
            const auto via_label = g1.mean_all(g1.sub(half, full));
            ad::Graph g2;
            const auto x2 = g2.leaf(h);
            const auto direct = sq.conjugate_mean_node(g2, x2);
            CHECK(std::abs(g1.value(via_label).value() - g2.value(direct).value()) <= 1e-12);
            CHECK(max_abs_diff(g1.backward(via_label)[x1], g2.backward(direct)[x2]) <= 1e-10);
        }
    }
}

// Holding the instantaneous pseudo-label constant makes the supervised-loss
// gradient vanish: the label is defined by exactly that stationarity.
TEST_CASE("detached instantaneous pseudo-labels have zero gradient") {
    Rng rng(53);
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::Squared}) {
        const LossSpec spec = make_loss(kind, {}, 4);
        for (int t = 0; t < 10; ++t) {
            const Tensor h = random_logits(4, rng, -5.0, 5.0);
            const Tensor label = conjugate_pseudolabel(spec, h);
            ad::Graph g;
            const auto x = g.leaf(single_row(h));
            const auto obj =
                spec.supervised_mean_node(g, x, Tensor::mat(1, 4, label.data()));
            CHECK(max_abs(g.backward(obj)[x]) <= 1e-13);
        }
    }
}

TEST_CASE("minimizing the supervised cross-entropy drives softmax to the target") {
    Rng rng(59);
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 4);
    const Tensor target = softmax(random_logits(4, rng, -1.0, 1.0));
    Tensor h({4});
    double grad_norm = 1.0;
    for (int it = 0; it < 20000 && grad_norm >= 1e-6; ++it) {
        const Tensor s = softmax(h);
        Tensor grad = sub(s, target);
        grad_norm = std::sqrt(squared_norm(grad));
        for (std::size_t i = 0; i < 4; ++i) h[i] -= 1.0 * grad[i];
    }
    CHECK(grad_norm < 1e-6);
    CHECK(max_abs_diff(softmax(h), target) < 1e-6);
}

TEST_CASE("label encoding") {
    const LossSpec ce = make_loss(LossKind::CrossEntropy, {}, 3);
    const Tensor onehot = encode_labels(ce, {0, 2, 1});
    CHECK(onehot.at(0, 0) == 1.0);
    CHECK(onehot.at(1, 2) == 1.0);
    CHECK(onehot.at(2, 1) == 1.0);
    CHECK(sum(onehot) == 3.0);
    CHECK_THROWS_AS(encode_labels(ce, {3}), ConfigError);

    const LossSpec ex = make_loss(LossKind::Exponential, {}, 2);
    const Tensor pm = encode_labels(ex, {1, -1});
    CHECK(pm.at(0, 0) == 1.0);
    CHECK(pm.at(1, 0) == -1.0);
    CHECK_THROWS_AS(encode_labels(ex, {0}), ConfigError);
}
