// scratch calibration harness (not installed; used to pin benchmark defaults)
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "tta/bench.hpp"
#include "tta/datagen.hpp"

using namespace tta;

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "toy";
    if (mode == "toy") {
        ToyShiftConfig cfg;
        cfg.adapt_lr = argc > 2 ? std::atof(argv[2]) : 0.5;
        cfg.temperature = argc > 3 ? std::atof(argv[3]) : 1.0;
        cfg.n_test_per_class = argc > 4 ? std::atoi(argv[4]) : 2500;
        cfg.batch_size = argc > 5 ? std::atoi(argv[5]) : 200;
        cfg.d_lo = argc > 6 ? std::atof(argv[6]) : 0.5;
        cfg.d_hi = argc > 7 ? std::atof(argv[7]) : 2.0;
        cfg.train_epochs = argc > 8 ? std::atoi(argv[8]) : 30;
        cfg.train_lr = argc > 9 ? std::atof(argv[9]) : 0.05;
        if (argc > 10 && std::string(argv[10]) == "adam") cfg.optimizer = OptimizerKind::Adam;
        if (std::getenv("TUNE")) cfg.tune_per_method = true;
        if (const char* v = std::getenv("VAL_LAMBDA")) cfg.val_lambda = std::atof(v);
        if (std::getenv("WIDE_GRID")) cfg.lr_grid = {1.0, 0.3, 0.1, 0.01, 0.001};
        const ToySweepResult r = run_shift_sweep(cfg, {1, 2, 3, 4, 5});
        double src = 0;
        for (double a : r.source_accuracy_per_seed) src += a / 5.0;
        std::printf("source acc %.4f | lr %.3g T %.3g batch %zu\n", src, cfg.adapt_lr,
                    cfg.temperature, cfg.batch_size);
        std::printf("%-8s", "lambda");
        for (Method m : cfg.methods) std::printf("%14s", method_name(m));
        std::printf("\n");
        for (double l : cfg.lambdas) {
            std::printf("%-8.2f", l);
            for (Method m : cfg.methods) std::printf("%14.4f", r.cell(l, m).mean_accuracy);
            std::printf("\n");
        }
        if (std::getenv("PER_SEED")) {
            for (double l : cfg.lambdas)
                for (Method m : {Method::None, Method::Entropy, Method::ConjugatePl}) {
                    const auto& cell = r.cell(l, m);
                    std::printf("  l=%.2f %-13s:", l, method_name(m));
                    for (double a : cell.per_seed_accuracy) std::printf(" %.3f", a);
                    if (!cell.per_seed_lr.empty() && m != Method::None) {
                        std::printf("  (lr,T):");
                        for (std::size_t i = 0; i < cell.per_seed_lr.size(); ++i)
                            std::printf(" (%g,%g)", cell.per_seed_lr[i],
                                        cell.per_seed_temperature[i]);
                    }
                    std::printf("\n");
                }
        }
        return 0;
    }
    if (mode == "scores") {
        // |z| distribution of the source model on the lambda=0.7 stream
        ToyShiftConfig cfg;
        cfg.d_lo = argc > 2 ? std::atof(argv[2]) : 0.5;
        cfg.d_hi = argc > 3 ? std::atof(argv[3]) : 2.0;
        cfg.train_epochs = argc > 4 ? std::atoi(argv[4]) : 30;
        cfg.train_lr = argc > 5 ? std::atof(argv[5]) : 0.05;
        GaussianShiftSpec gspec;
        gspec.dim = cfg.dim;
        gspec.d_lo = cfg.d_lo;
        gspec.d_hi = cfg.d_hi;
        Rng root(1);
        Rng a = root.split(1), b = root.split(2), c = root.split(3), d = root.split(4);
        const ClusterParams src = make_cluster_params(0.0, gspec, a);
        const ClusterParams tgt = make_cluster_params(1.0, gspec, b);
        const Dataset train = sample_dataset(src, cfg.n_train_per_class, c);
        Rng init = root.split(5);
        Model m0 = Model::linear(cfg.dim, 1, init);
        const Model model =
            train_source(std::move(m0), train, LossSpec::make(LossKind::Exponential, {}, 2),
                         {cfg.train_lr, cfg.train_epochs, cfg.train_batch, 0.0, 0.1}, root.split(6))
                .model;
        const Dataset stream = sample_dataset(interpolate_shift(src, tgt, 0.7), 2000, d);
        const Tensor z = model.forward(stream.inputs, StatsMode::UseRunning);
        std::vector<double> absz;
        double wrong_big = 0, n_wrong = 0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            absz.push_back(std::abs(z.at(i, 0)));
            const int pred = z.at(i, 0) >= 0 ? 1 : -1;
            if (pred != stream.labels[i]) {
                n_wrong++;
                if (std::abs(z.at(i, 0)) > 2.4) wrong_big++;
            }
        }
        std::sort(absz.begin(), absz.end());
        std::printf("|z| quantiles: q10 %.2f q50 %.2f q90 %.2f q99 %.2f | err %.3f | wrong&|z|>2.4: %.3f\n",
                    absz[absz.size() / 10], absz[absz.size() / 2], absz[absz.size() * 9 / 10],
                    absz[absz.size() * 99 / 100], n_wrong / double(z.rows()),
                    wrong_big / double(z.rows()));
        return 0;
    }
    if (mode == "curve") {
        ToyShiftConfig cfg;
        cfg.adapt_lr = argc > 2 ? std::atof(argv[2]) : 1.0;
        cfg.temperature = argc > 3 ? std::atof(argv[3]) : 1.0;
        cfg.n_test_per_class = argc > 4 ? std::atoi(argv[4]) : 2500;
        cfg.batch_size = argc > 5 ? std::atoi(argv[5]) : 200;
        cfg.d_lo = argc > 6 ? std::atof(argv[6]) : 0.5;
        cfg.d_hi = argc > 7 ? std::atof(argv[7]) : 2.0;
        cfg.train_epochs = argc > 8 ? std::atoi(argv[8]) : 30;
        cfg.train_lr = argc > 9 ? std::atof(argv[9]) : 0.05;
        if (argc > 10 && std::string(argv[10]) == "adam") cfg.optimizer = OptimizerKind::Adam;
        cfg.lambdas = {0.7};
        const ToySweepResult r = run_shift_sweep(cfg, {1, 2, 3});
        for (Method m : {Method::Entropy, Method::ConjugatePl}) {
            const auto& cell = r.cell(0.7, m);
            std::printf("%12s:", method_name(m));
            const auto& c = cell.step_accuracy_mean;
            for (std::size_t i = 0; i < c.size(); i += std::max<std::size_t>(1, c.size() / 16))
                std::printf(" %.2f", c[i]);
            std::printf("  (mean %.3f)\n", cell.mean_accuracy);
        }
        return 0;
    }
    if (mode == "meta") {
        MetaBenchConfig cfg;
        cfg.source_loss = (argc > 2 && std::string(argv[2]) == "sq") ? LossKind::Squared
                                                                     : LossKind::CrossEntropy;
        cfg.task_loss = cfg.source_loss;
        cfg.alpha = argc > 3 ? std::atof(argv[3]) : 0.5;
        cfg.beta = argc > 4 ? std::atof(argv[4]) : 0.2;
        cfg.iterations = argc > 5 ? std::atoi(argv[5]) : 200;
        int ce_better = 0;
        double mean_red = 0;
        for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
            const MetaBenchResult r = run_meta_benchmark(cfg, seed);
            const double red = (r.holdout_initial - r.holdout_final) / r.holdout_initial;
            mean_red += red / 5.0;
            const bool entropy_wins = r.entropy_fit.residual < r.quadratic_fit.residual;
            if (entropy_wins) ce_better++;
            std::printf(
                "seed %llu: holdout %.4f -> %.4f (red %.1f%%), ent resid %.4g quad resid %.4g "
                "%s | fit alpha %.3g T %.3g\n",
                (unsigned long long)seed, r.holdout_initial, r.holdout_final, red * 100,
                r.entropy_fit.residual, r.quadratic_fit.residual,
                entropy_wins ? "ENT" : "QUAD", r.entropy_fit.alpha_mag,
                r.entropy_fit.temperature);
        }
        std::printf("mean reduction %.1f%%, entropy-template wins %d/5\n", mean_red * 100,
                    ce_better);
        return 0;
    }
    std::fprintf(stderr, "unknown mode\n");
    return 1;
}
