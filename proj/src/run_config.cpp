// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/run_config.hpp"

#include <algorithm>

#include "tta/errors.hpp"

namespace tta {

namespace {

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("config section '" + path + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&key](const char* k) { return key == k; }) == allowed.end())
            throw ConfigError("unknown config key: " + (path.empty() ? key : path + "." + key));
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for config key '") + key + "': " + e.what());
        }
    }
}

DataConfig parse_data(const json& j) {
    check_keys(j, "data",
               {"kind", "dim", "lambda", "k_source", "k_target", "d_range", "seed",
                "n_per_class_train", "n_per_class_test", "val_lambdas", "train_csv", "test_csv",
                "multiclass_labels"});
    DataConfig d;
    std::string kind = "gaussian_shift";
    read(j, "kind", kind);
    if (kind == "gaussian_shift")
        d.kind = DataConfig::Kind::GaussianShift;
    else if (kind == "csv")
        d.kind = DataConfig::Kind::Csv;
    else
        throw ConfigError("data.kind must be 'gaussian_shift' or 'csv'");
    read(j, "dim", d.gshift.dim);
    read(j, "lambda", d.gshift.lambda);
    read(j, "k_source", d.gshift.k_source);
    read(j, "k_target", d.gshift.k_target);
    if (j.contains("d_range")) {
        const auto r = j.at("d_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("data.d_range must be [lo, hi]");
        d.gshift.d_lo = r[0];
        d.gshift.d_hi = r[1];
    }
    read(j, "seed", d.gshift.seed);
    read(j, "n_per_class_train", d.n_per_class_train);
    read(j, "n_per_class_test", d.n_per_class_test);
    read(j, "val_lambdas", d.val_lambdas);
    read(j, "train_csv", d.train_csv);
    read(j, "test_csv", d.test_csv);
    read(j, "multiclass_labels", d.multiclass_labels);
    return d;
}

ModelConfig parse_model(const json& j) {
    check_keys(j, "model", {"type", "input_dim", "output_dim", "hidden", "file"});
    ModelConfig m;
    read(j, "type", m.type);
    if (m.type != "linear" && m.type != "mlp")
        throw ConfigError("model.type must be 'linear' or 'mlp'");
    read(j, "input_dim", m.input_dim);
    read(j, "output_dim", m.output_dim);
    read(j, "hidden", m.hidden);
    read(j, "file", m.file);
    return m;
}

LossConfig parse_loss(const json& j) {
    check_keys(j, "loss", {"kind", "epsilon", "num_classes"});
    LossConfig l;
    std::string kind = "exponential";
    read(j, "kind", kind);
    l.kind = parse_loss_kind(kind);
    read(j, "epsilon", l.epsilon);
    read(j, "num_classes", l.num_classes);
    return l;
}

TTAConfig parse_tta(const json& j) {
    check_keys(j, "tta",
               {"method", "lr", "temperature", "mask", "confidence_threshold", "q", "optimizer",
                "batch_size", "precomputed_labels", "seed"});
    TTAConfig t;
    std::string method = "conjugate_pl";
    read(j, "method", method);
    t.method = parse_method(method);
    read(j, "lr", t.lr);
    read(j, "temperature", t.temperature);
    std::string mask = "all";
    read(j, "mask", mask);
    if (mask == "all")
        t.mask.mode = MaskMode::All;
    else if (mask == "bn_only")
        t.mask.mode = MaskMode::BnOnly;
    else
        throw ConfigError("tta.mask must be 'all' or 'bn_only'");
    if (j.contains("confidence_threshold"))
        t.confidence_threshold = j.at("confidence_threshold").get<double>();
    if (j.contains("q")) t.q = j.at("q").get<double>();
    // defaults named by the method, echoed into the effective config
    if (t.method == Method::HardPl && !t.confidence_threshold) t.confidence_threshold = 0.9;
    if (t.method == Method::RobustPl && !t.q) t.q = 0.8;
    std::string optimizer = "sgd";
    read(j, "optimizer", optimizer);
    if (optimizer == "sgd")
        t.optimizer = OptimizerKind::Sgd;
    else if (optimizer == "adam")
        t.optimizer = OptimizerKind::Adam;
    else
        throw ConfigError("tta.optimizer must be 'sgd' or 'adam'");
    read(j, "batch_size", t.batch_size);
    read(j, "precomputed_labels", t.precomputed_labels);
    read(j, "seed", t.seed);
    return t;
}

TrainConfig parse_train(const json& j) {
    check_keys(j, "train", {"lr", "epochs", "batch_size", "momentum", "bn_stats_momentum"});
    TrainConfig t;
    read(j, "lr", t.lr);
    read(j, "epochs", t.epochs);
    read(j, "batch_size", t.batch_size);
    read(j, "momentum", t.momentum);
    read(j, "bn_stats_momentum", t.bn_stats_momentum);
    return t;
}

GridConfig parse_grid(const json& j) {
    check_keys(j, "grid", {"lr_grid", "t_grid"});
    GridConfig g;
    read(j, "lr_grid", g.lr_grid);
    read(j, "t_grid", g.t_grid);
    return g;
}

MetaBenchConfig parse_meta(const json& j) {
    check_keys(j, "meta",
               {"dim", "num_classes", "d_range", "train_lambdas", "holdout_lambda",
                "unlabeled_per_pair", "labeled_per_pair", "source_loss", "task_loss",
                "n_source_per_class", "source_lr", "source_epochs", "source_batch", "net_hidden",
                "alpha", "beta", "iterations", "fd_step", "slice_range", "slice_steps"});
    MetaBenchConfig m;
    read(j, "dim", m.dim);
    read(j, "num_classes", m.num_classes);
    if (j.contains("d_range")) {
        const auto r = j.at("d_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("meta.d_range must be [lo, hi]");
        m.d_lo = r[0];
        m.d_hi = r[1];
    }
    read(j, "train_lambdas", m.train_lambdas);
    read(j, "holdout_lambda", m.holdout_lambda);
    read(j, "unlabeled_per_pair", m.unlabeled_per_pair);
    read(j, "labeled_per_pair", m.labeled_per_pair);
    if (j.contains("source_loss"))
        m.source_loss = parse_loss_kind(j.at("source_loss").get<std::string>());
    if (j.contains("task_loss"))
        m.task_loss = parse_loss_kind(j.at("task_loss").get<std::string>());
    read(j, "n_source_per_class", m.n_source_per_class);
    read(j, "source_lr", m.source_lr);
    read(j, "source_epochs", m.source_epochs);
    read(j, "source_batch", m.source_batch);
    read(j, "net_hidden", m.net_hidden);
    read(j, "alpha", m.alpha);
    read(j, "beta", m.beta);
    read(j, "iterations", m.iterations);
    read(j, "fd_step", m.fd_step);
    if (j.contains("slice_range")) {
        const auto r = j.at("slice_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("meta.slice_range must be [lo, hi]");
        m.slice_lo = r[0];
        m.slice_hi = r[1];
    }
    read(j, "slice_steps", m.slice_steps);
    return m;
}

SliceConfig parse_slice(const json& j) {
    check_keys(j, "slice",
               {"target", "net_file", "method", "base", "dim", "range", "steps", "temperature"});
    SliceConfig s;
    read(j, "target", s.target);
    if (s.target != "objective" && s.target != "net")
        throw ConfigError("slice.target must be 'objective' or 'net'");
    read(j, "net_file", s.net_file);
    if (j.contains("method")) s.method = parse_method(j.at("method").get<std::string>());
    read(j, "base", s.base);
    read(j, "dim", s.dim);
    if (j.contains("range")) {
        const auto r = j.at("range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("slice.range must be [lo, hi]");
        s.lo = r[0];
        s.hi = r[1];
    }
    read(j, "steps", s.steps);
    read(j, "temperature", s.temperature);
    return s;
}

SweepConfig parse_sweep(const json& j) {
    check_keys(j, "sweep",
               {"seeds", "dim", "d_range", "n_train_per_class", "n_test_per_class", "train_lr",
                "train_epochs", "train_batch", "adapt_lr", "temperature", "batch_size",
                "hard_threshold", "lambdas", "methods"});
    SweepConfig s;
    read(j, "seeds", s.seeds);
    read(j, "dim", s.toy.dim);
    if (j.contains("d_range")) {
        const auto r = j.at("d_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("sweep.d_range must be [lo, hi]");
        s.toy.d_lo = r[0];
        s.toy.d_hi = r[1];
    }
    read(j, "n_train_per_class", s.toy.n_train_per_class);
    read(j, "n_test_per_class", s.toy.n_test_per_class);
    read(j, "train_lr", s.toy.train_lr);
    read(j, "train_epochs", s.toy.train_epochs);
    read(j, "train_batch", s.toy.train_batch);
    read(j, "adapt_lr", s.toy.adapt_lr);
    read(j, "temperature", s.toy.temperature);
    read(j, "batch_size", s.toy.batch_size);
    read(j, "hard_threshold", s.toy.hard_threshold);
    read(j, "lambdas", s.toy.lambdas);
    if (j.contains("methods")) {
        s.toy.methods.clear();
        for (const auto& name : j.at("methods"))
            s.toy.methods.push_back(parse_method(name.get<std::string>()));
    }
    return s;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
    check_keys(doc, "",
               {"seed", "output_dir", "data", "model", "loss", "tta", "train", "grid", "meta",
                "slice", "sweep"});
    RunConfig cfg;
    read(doc, "seed", cfg.seed);
    read(doc, "output_dir", cfg.output_dir);
    if (doc.contains("data")) cfg.data = parse_data(doc.at("data"));
    if (doc.contains("model")) cfg.model = parse_model(doc.at("model"));
    if (doc.contains("loss")) cfg.loss = parse_loss(doc.at("loss"));
    if (doc.contains("tta")) cfg.tta = parse_tta(doc.at("tta"));
    if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
    if (doc.contains("grid")) cfg.grid = parse_grid(doc.at("grid"));
    if (doc.contains("meta")) cfg.meta = parse_meta(doc.at("meta"));
    if (doc.contains("slice")) cfg.slice = parse_slice(doc.at("slice"));
    if (doc.contains("sweep")) cfg.sweep = parse_sweep(doc.at("sweep"));
    return cfg;
}

json RunConfig::effective_json() const {
    json doc;
    doc["seed"] = seed;
    doc["output_dir"] = output_dir;
    doc["data"] = {{"kind", data.kind == DataConfig::Kind::GaussianShift ? "gaussian_shift" : "csv"},
                   {"dim", data.gshift.dim},
                   {"lambda", data.gshift.lambda},
                   {"k_source", data.gshift.k_source},
                   {"k_target", data.gshift.k_target},
                   {"d_range", {data.gshift.d_lo, data.gshift.d_hi}},
                   {"seed", data.gshift.seed},
                   {"n_per_class_train", data.n_per_class_train},
                   {"n_per_class_test", data.n_per_class_test},
                   {"val_lambdas", data.val_lambdas},
                   {"train_csv", data.train_csv},
                   {"test_csv", data.test_csv},
                   {"multiclass_labels", data.multiclass_labels}};
    doc["model"] = {{"type", model.type},
                    {"input_dim", model.input_dim},
                    {"output_dim", model.output_dim},
                    {"hidden", model.hidden},
                    {"file", model.file}};
    doc["loss"] = {{"kind", loss_kind_name(loss.kind)},
                   {"epsilon", loss.epsilon},
                   {"num_classes", loss.num_classes}};
    json tta_j = {{"method", method_name(tta.method)},
                  {"lr", tta.lr},
                  {"temperature", tta.temperature},
                  {"mask", tta.mask.mode == MaskMode::BnOnly ? "bn_only" : "all"},
                  {"optimizer", tta.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"},
                  {"batch_size", tta.batch_size},
                  {"precomputed_labels", tta.precomputed_labels},
                  {"seed", tta.seed}};
    if (tta.confidence_threshold) tta_j["confidence_threshold"] = *tta.confidence_threshold;
    if (tta.q) tta_j["q"] = *tta.q;
    doc["tta"] = std::move(tta_j);
    doc["train"] = {{"lr", train.lr},
                    {"epochs", train.epochs},
                    {"batch_size", train.batch_size},
                    {"momentum", train.momentum},
                    {"bn_stats_momentum", train.bn_stats_momentum}};
    doc["grid"] = {{"lr_grid", grid.lr_grid}, {"t_grid", grid.t_grid}};
    doc["meta"] = {{"dim", meta.dim},
                   {"num_classes", meta.num_classes},
                   {"d_range", {meta.d_lo, meta.d_hi}},
                   {"train_lambdas", meta.train_lambdas},
                   {"holdout_lambda", meta.holdout_lambda},
                   {"unlabeled_per_pair", meta.unlabeled_per_pair},
                   {"labeled_per_pair", meta.labeled_per_pair},
                   {"source_loss", loss_kind_name(meta.source_loss)},
                   {"task_loss", loss_kind_name(meta.task_loss)},
                   {"n_source_per_class", meta.n_source_per_class},
                   {"source_lr", meta.source_lr},
                   {"source_epochs", meta.source_epochs},
                   {"source_batch", meta.source_batch},
                   {"net_hidden", meta.net_hidden},
                   {"alpha", meta.alpha},
                   {"beta", meta.beta},
                   {"iterations", meta.iterations},
                   {"fd_step", meta.fd_step},
                   {"slice_range", {meta.slice_lo, meta.slice_hi}},
                   {"slice_steps", meta.slice_steps}};
    doc["slice"] = {{"target", slice.target},   {"net_file", slice.net_file},
                    {"method", method_name(slice.method)}, {"base", slice.base},
                    {"dim", slice.dim},          {"range", {slice.lo, slice.hi}},
                    {"steps", slice.steps},      {"temperature", slice.temperature}};
    json methods = json::array();
    for (Method m : sweep.toy.methods) methods.push_back(method_name(m));
    doc["sweep"] = {{"seeds", sweep.seeds},
                    {"dim", sweep.toy.dim},
                    {"d_range", {sweep.toy.d_lo, sweep.toy.d_hi}},
                    {"n_train_per_class", sweep.toy.n_train_per_class},
                    {"n_test_per_class", sweep.toy.n_test_per_class},
                    {"train_lr", sweep.toy.train_lr},
                    {"train_epochs", sweep.toy.train_epochs},
                    {"train_batch", sweep.toy.train_batch},
                    {"adapt_lr", sweep.toy.adapt_lr},
                    {"temperature", sweep.toy.temperature},
                    {"batch_size", sweep.toy.batch_size},
                    {"hard_threshold", sweep.toy.hard_threshold},
                    {"lambdas", sweep.toy.lambdas},
                    {"methods", std::move(methods)}};
    return doc;
}

namespace {

std::pair<ClusterParams, ClusterParams> cluster_pair(const RunConfig& cfg) {
    Rng root(cfg.data.gshift.seed != 0 ? cfg.data.gshift.seed : cfg.seed);
    Rng src = root.split(1);
    Rng tgt = root.split(2);
    return {make_cluster_params(cfg.data.gshift.k_source, cfg.data.gshift, src),
            make_cluster_params(cfg.data.gshift.k_target, cfg.data.gshift, tgt)};
}

Dataset finalize_labels(Dataset d, const RunConfig& cfg) {
    if (cfg.data.multiclass_labels) return to_multiclass(d);
    return d;
}

}  // namespace

Dataset make_train_dataset(const RunConfig& cfg) {
    if (cfg.data.kind == DataConfig::Kind::Csv) {
        if (cfg.data.train_csv.empty()) throw ConfigError("data.train_csv is required");
        return load_dataset_csv(cfg.data.train_csv);
    }
    auto [source, target] = cluster_pair(cfg);
    (void)target;
    Rng root(cfg.data.gshift.seed != 0 ? cfg.data.gshift.seed : cfg.seed);
    Rng rng = root.split(3);
    Dataset d = sample_dataset(source, cfg.data.n_per_class_train, rng);
    d.role = Dataset::Role::SourceTrain;
    return finalize_labels(std::move(d), cfg);
}

Dataset make_test_stream(const RunConfig& cfg) {
    if (cfg.data.kind == DataConfig::Kind::Csv) {
        if (cfg.data.test_csv.empty()) throw ConfigError("data.test_csv is required");
        return load_dataset_csv(cfg.data.test_csv);
    }
    auto [source, target] = cluster_pair(cfg);
    const ClusterParams shifted = interpolate_shift(source, target, cfg.data.gshift.lambda);
    Rng root(cfg.data.gshift.seed != 0 ? cfg.data.gshift.seed : cfg.seed);
    Rng rng = root.split(4);
    Dataset d = sample_dataset(shifted, cfg.data.n_per_class_test, rng);
    d.role = Dataset::Role::TestStream;
    return finalize_labels(std::move(d), cfg);
}

std::vector<Dataset> make_validation_streams(const RunConfig& cfg) {
    if (cfg.data.kind == DataConfig::Kind::Csv) {
        if (cfg.data.test_csv.empty()) throw ConfigError("data.test_csv is required");
        return {load_dataset_csv(cfg.data.test_csv)};
    }
    auto [source, target] = cluster_pair(cfg);
    Rng root(cfg.data.gshift.seed != 0 ? cfg.data.gshift.seed : cfg.seed);
    std::vector<Dataset> streams;
    for (std::size_t i = 0; i < cfg.data.val_lambdas.size(); ++i) {
        const ClusterParams shifted =
            interpolate_shift(source, target, cfg.data.val_lambdas[i]);
        Rng rng = root.split(100 + i);
        Dataset d = sample_dataset(shifted, cfg.data.n_per_class_test, rng);
        d.role = Dataset::Role::SourceVal;
        streams.push_back(finalize_labels(std::move(d), cfg));
    }
    return streams;
}

Model make_model(const RunConfig& cfg) {
    if (!cfg.model.file.empty()) return Model::load(cfg.model.file);
    Rng root(cfg.seed);
    Rng rng = root.split(5);
    if (cfg.model.type == "linear")
        return Model::linear(cfg.model.input_dim, cfg.model.output_dim, rng);
    return Model::mlp(cfg.model.input_dim, cfg.model.hidden, cfg.model.output_dim, rng);
}

}  // namespace tta
