// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/bench.hpp"

#include <charconv>
#include <cmath>

#include "tta/errors.hpp"

namespace tta {

namespace {

// fixed sub-stream ids so every consumer of a seed draws independently
enum StreamId : std::uint64_t {
    kSourceParams = 1,
    kTargetParams = 2,
    kTrainData = 3,
    kTestData = 4,
    kModelInit = 5,
    kTrainLoop = 6,
    kSourceEval = 7,
    kPairData = 8,
    kValData = 9,
};

}  // namespace

const ToyCell& ToySweepResult::cell(double lambda, Method method) const {
    for (const auto& c : cells)
        if (c.lambda == lambda && c.method == method) return c;
    throw ConfigError("no sweep cell for that (lambda, method)");
}

std::string ToySweepResult::summary_csv() const {
    std::string out = "lambda";
    for (Method m : config.methods) {
        out += ',';
        out += method_name(m);
    }
    out += '\n';
    char buf[64];
    for (double lambda : config.lambdas) {
        auto r = std::to_chars(buf, buf + sizeof(buf), lambda);
        out.append(buf, r.ptr);
        for (Method m : config.methods) {
            out += ',';
            auto r2 = std::to_chars(buf, buf + sizeof(buf), cell(lambda, m).mean_accuracy);
            out.append(buf, r2.ptr);
        }
        out += '\n';
    }
    return out;
}

ToySweepResult run_shift_sweep(const ToyShiftConfig& cfg,
                               const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("shift sweep requires at least one seed");
    ToySweepResult result;
    result.config = cfg;
    result.seeds = seeds;

    const LossSpec spec = LossSpec::make(LossKind::Exponential, {}, 2);
    GaussianShiftSpec gspec;
    gspec.dim = cfg.dim;
    gspec.d_lo = cfg.d_lo;
    gspec.d_hi = cfg.d_hi;

    for (double lambda : cfg.lambdas)
        for (Method m : cfg.methods) {
            ToyCell cell;
            cell.lambda = lambda;
            cell.method = m;
            result.cells.push_back(cell);
        }
    auto cell_at = [&](double lambda, Method m) -> ToyCell& {
        for (auto& c : result.cells)
            if (c.lambda == lambda && c.method == m) return c;
        throw ConfigError("missing cell");
    };

    for (std::uint64_t seed : seeds) {
        Rng root(seed);
        Rng src_rng = root.split(kSourceParams);
        Rng tgt_rng = root.split(kTargetParams);
        const ClusterParams source = make_cluster_params(cfg.k_source, gspec, src_rng);
        const ClusterParams target = make_cluster_params(cfg.k_target, gspec, tgt_rng);

        Rng train_rng = root.split(kTrainData);
        const Dataset train = sample_dataset(source, cfg.n_train_per_class, train_rng);
        Rng eval_rng = root.split(kSourceEval);
        const Dataset source_eval = sample_dataset(source, cfg.n_test_per_class, eval_rng);

        Rng init_rng = root.split(kModelInit);
        Model base = Model::linear(cfg.dim, 1, init_rng);
        TrainConfig tc;
        tc.lr = cfg.train_lr;
        tc.epochs = cfg.train_epochs;
        tc.batch_size = cfg.train_batch;
        const Model source_model =
            train_source(std::move(base), train, spec, tc, root.split(kTrainLoop)).model;
        result.source_accuracy_per_seed.push_back(
            1.0 - eval_error(source_model, source_eval, StatsMode::UseRunning));

        auto base_config = [&](Method m) {
            TTAConfig tta;
            tta.method = m;
            tta.lr = cfg.adapt_lr;
            tta.temperature = cfg.temperature;
            tta.optimizer = cfg.optimizer;
            tta.mask = ParamMask{MaskMode::All};
            tta.batch_size = cfg.batch_size;
            tta.seed = seed;
            if (m == Method::HardPl) tta.confidence_threshold = cfg.hard_threshold;
            return tta;
        };

        std::vector<std::pair<double, double>> tuned(cfg.methods.size(),
                                                     {cfg.adapt_lr, cfg.temperature});
        if (cfg.tune_per_method) {
            Rng val_rng = root.split(kValData);
            const Dataset val = sample_dataset(interpolate_shift(source, target, cfg.val_lambda),
                                               cfg.n_val_per_class, val_rng);
            for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
                const Method m = cfg.methods[mi];
                if (m == Method::None) continue;
                const GridResult gr = grid_search(source_model, spec, {val}, cfg.lr_grid,
                                                  cfg.t_grid, base_config(m));
                tuned[mi] = {gr.best_lr, gr.best_temperature};
            }
        }

        for (double lambda : cfg.lambdas) {
            const ClusterParams shifted = interpolate_shift(source, target, lambda);
            Rng test_rng = root.split(kTestData + std::uint64_t(std::llround(lambda * 1000.0)));
            const Dataset stream = sample_dataset(shifted, cfg.n_test_per_class, test_rng);

            for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
                const Method m = cfg.methods[mi];
                TTAConfig tta = base_config(m);
                tta.lr = tuned[mi].first;
                tta.temperature = tuned[mi].second;

                Model adapted = source_model;
                const OnlineReport report = adapt_online(adapted, stream, spec, tta);
                ToyCell& cell = cell_at(lambda, m);
                cell.per_seed_accuracy.push_back(1.0 - report.mean_online_error);
                cell.per_seed_lr.push_back(tta.lr);
                cell.per_seed_temperature.push_back(tta.temperature);
                if (cell.step_accuracy_mean.empty())
                    cell.step_accuracy_mean.assign(report.per_batch.size(), 0.0);
                for (std::size_t b = 0;
                     b < report.per_batch.size() && b < cell.step_accuracy_mean.size(); ++b)
                    cell.step_accuracy_mean[b] += 1.0 - report.per_batch[b].error;
            }
        }
    }

    for (auto& cell : result.cells) {
        double s = 0.0;
        for (double a : cell.per_seed_accuracy) s += a;
        cell.mean_accuracy = s / double(cell.per_seed_accuracy.size());
        for (auto& v : cell.step_accuracy_mean) v /= double(seeds.size());
    }
    return result;
}

MetaBenchResult run_meta_benchmark(const MetaBenchConfig& cfg, std::uint64_t seed) {
    const LossSpec source_spec = LossSpec::make(cfg.source_loss, {}, cfg.num_classes);
    const LossSpec task_spec = LossSpec::make(cfg.task_loss, {}, cfg.num_classes);

    GaussianShiftSpec gspec;
    gspec.dim = cfg.dim;
    gspec.d_lo = cfg.d_lo;
    gspec.d_hi = cfg.d_hi;

    Rng root(seed);
    Rng src_rng = root.split(kSourceParams);
    Rng tgt_rng = root.split(kTargetParams);
    const ClusterParams source = make_cluster_params(cfg.k_source, gspec, src_rng);
    const ClusterParams target = make_cluster_params(cfg.k_target, gspec, tgt_rng);

    Rng train_rng = root.split(kTrainData);
    const Dataset train = to_multiclass(sample_dataset(source, cfg.n_source_per_class, train_rng));

    Rng init_rng = root.split(kModelInit);
    Model base = Model::linear(cfg.dim, cfg.num_classes, init_rng);
    TrainConfig tc;
    tc.lr = cfg.source_lr;
    tc.epochs = cfg.source_epochs;
    tc.batch_size = cfg.source_batch;
    const Model source_model =
        train_source(std::move(base), train, source_spec, tc, root.split(kTrainLoop)).model;

    auto make_pair = [&](double lambda, std::uint64_t stream) {
        const ClusterParams shifted = interpolate_shift(source, target, lambda);
        Rng rng = root.split(kPairData + stream);
        const std::size_t n_unlab = std::max<std::size_t>(1, cfg.unlabeled_per_pair / 2);
        const std::size_t n_lab = std::max<std::size_t>(1, cfg.labeled_per_pair / 2);
        const Dataset unlabeled = to_multiclass(sample_dataset(shifted, n_unlab, rng));
        const Dataset labeled = to_multiclass(sample_dataset(shifted, n_lab, rng));
        ShiftPair pair;
        pair.unlabeled = unlabeled.inputs;
        pair.labeled_inputs = labeled.inputs;
        pair.labeled_targets = labeled.labels;
        return pair;
    };

    std::vector<ShiftPair> pairs;
    for (std::size_t i = 0; i < cfg.train_lambdas.size(); ++i)
        pairs.push_back(make_pair(cfg.train_lambdas[i], 10 + i));
    const ShiftPair holdout = make_pair(cfg.holdout_lambda, 99);

    Rng net_rng = root.split(kModelInit + 100);
    MetaLossNet net = MetaLossNet::create(cfg.num_classes, cfg.net_hidden, net_rng, true);

    MetaConfig mc;
    mc.alpha = cfg.alpha;
    mc.beta = cfg.beta;
    mc.iterations = cfg.iterations;
    mc.task_loss = task_spec;
    mc.fd_step = cfg.fd_step;
    mc.mask = ParamMask{MaskMode::All};
    mc.seed = seed;

    MetaBenchResult result{net, {}, 0.0, 0.0, {}, {}, {}};
    result.holdout_initial = outer_objective(net, source_model, holdout, mc);

    MetaTrainResult trained = meta_train(std::move(net), source_model, pairs, mc);
    result.net = std::move(trained.net);
    result.trajectory = std::move(trained.objective_trajectory);
    result.holdout_final = outer_objective(result.net, source_model, holdout, mc);

    Tensor slice_base({cfg.num_classes});
    result.slice = slice_export(net_slice_fn(result.net), slice_base, 0, cfg.slice_lo,
                                cfg.slice_hi, cfg.slice_steps);
    result.entropy_fit = fit_scaled_entropy(result.slice, slice_base, 0);
    result.quadratic_fit = fit_quadratic(result.slice);
    return result;
}

}  // namespace tta
