// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line pipeline: data generation, source training, online adaptation,
// grid search, meta-learning, slice export, the invariant check suite, and the
// synthetic-shift method sweep. stdout carries a short summary; files written
// into the output directory are the machine-readable contract.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tta/bench.hpp"
#include "tta/checks.hpp"
#include "tta/errors.hpp"
#include "tta/json_util.hpp"
#include "tta/run_config.hpp"
#include "tta/version.hpp"

namespace {

using tta::json;

class Report {
public:
    Report(std::string command, std::string output_dir, const tta::RunConfig& cfg)
        : output_dir_(std::move(output_dir)), start_(std::chrono::steady_clock::now()) {
        std::filesystem::create_directories(output_dir_);
        doc_["tool_version"] = tta::kVersion;
        doc_["command"] = std::move(command);
        doc_["effective_config"] = cfg.effective_json();
    }

    std::string path(const std::string& name) const {
        return (std::filesystem::path(output_dir_) / name).string();
    }

    void write_file(const std::string& name, const std::string& text) {
        tta::write_text_file(path(name), text);
        files_.push_back(name);
    }

    // for files another component already wrote into the output directory
    void record_file(const std::string& name) { files_.push_back(name); }

    json& results() { return doc_["results"]; }

    void finish() {
        doc_["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        files_.push_back("report.json");
        doc_["files"] = files_;
        tta::write_text_file(path("report.json"), doc_.dump(2));
    }

private:
    std::string output_dir_;
    std::chrono::steady_clock::time_point start_;
    json doc_;
    std::vector<std::string> files_;
};

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw tta::ConfigError("--set expects key.path=value, got: " + assignment);
    const std::string key_path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // bare strings allowed
    }
    json* cur = &doc;
    std::size_t pos = 0;
    while (true) {
        const auto dot = key_path.find('.', pos);
        const std::string part = key_path.substr(pos, dot - pos);
        if (part.empty()) throw tta::ConfigError("--set: empty key segment in " + key_path);
        if (dot == std::string::npos) {
            (*cur)[part] = value;
            break;
        }
        cur = &(*cur)[part];
        pos = dot + 1;
    }
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir_flag;
    std::int64_t seed_flag = -1;
};

tta::RunConfig load_config(const CommonArgs& args) {
    json doc = json::object();
    if (!args.config_path.empty()) doc = tta::parse_json_file(args.config_path);
    for (const auto& o : args.overrides) apply_override(doc, o);
    tta::RunConfig cfg = tta::RunConfig::from_json(doc);
    if (!doc.contains("output_dir") && args.output_dir_flag.empty()) {
        if (const char* env = std::getenv("TTAKIT_OUTPUT_DIR")) cfg.output_dir = env;
    }
    if (!args.output_dir_flag.empty()) cfg.output_dir = args.output_dir_flag;
    if (args.seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_flag);
    return cfg;
}

int cmd_gen_data(const tta::RunConfig& cfg) {
    Report report("gen-data", cfg.output_dir, cfg);
    const tta::Dataset train = tta::make_train_dataset(cfg);
    const tta::Dataset stream = tta::make_test_stream(cfg);
    tta::save_dataset_csv(report.path("source_train.csv"), train);
    report.record_file("source_train.csv");
    tta::save_dataset_csv(report.path("test_stream.csv"), stream);
    report.record_file("test_stream.csv");
    report.results()["train_rows"] = train.labels.size();
    report.results()["test_rows"] = stream.labels.size();
    report.results()["lambda"] = cfg.data.gshift.lambda;
    report.finish();
    std::cout << "generated " << train.labels.size() << " train rows and " << stream.labels.size()
              << " test rows (lambda " << cfg.data.gshift.lambda << ")\n";
    return 0;
}

int cmd_train_source(const tta::RunConfig& cfg) {
    Report report("train-source", cfg.output_dir, cfg);
    const tta::LossSpec spec = cfg.loss.to_spec();
    const tta::Dataset train = tta::make_train_dataset(cfg);
    const tta::Dataset stream = tta::make_test_stream(cfg);
    tta::Model model = tta::make_model(cfg);
    tta::Rng rng = tta::Rng(cfg.seed).split(6);
    tta::TrainResult trained = tta::train_source(std::move(model), train, spec, cfg.train, rng);

    const double train_error = tta::eval_error(trained.model, train, tta::StatsMode::UseRunning);
    const double test_error = tta::eval_error(trained.model, stream, tta::StatsMode::UseRunning);
    trained.model.save(report.path("model.json"));
    report.record_file("model.json");
    report.results()["epoch_losses"] = trained.epoch_losses;
    report.results()["train_error"] = train_error;
    report.results()["test_error"] = test_error;
    report.finish();
    std::cout << "trained " << cfg.model.type << ": train error " << train_error
              << ", test error " << test_error << "\n";
    return 0;
}

int cmd_adapt(const tta::RunConfig& cfg) {
    Report report("adapt", cfg.output_dir, cfg);
    const tta::LossSpec spec = cfg.loss.to_spec();
    const tta::Dataset stream = tta::make_test_stream(cfg);
    tta::Model model = tta::make_model(cfg);
    const tta::OnlineReport online = tta::adapt_online(model, stream, spec, cfg.tta);
    report.write_file("trajectory.csv", tta::online_report_to_csv(online));
    report.write_file("online_report.json", tta::online_report_to_json(online));
    report.results()["mean_online_error"] = online.mean_online_error;
    report.results()["batches"] = online.per_batch.size();
    report.finish();
    std::cout << "adapt " << tta::method_name(cfg.tta.method) << ": mean online error "
              << online.mean_online_error << " over " << online.per_batch.size() << " batches\n";
    return 0;
}

int cmd_grid(const tta::RunConfig& cfg) {
    Report report("grid", cfg.output_dir, cfg);
    const tta::LossSpec spec = cfg.loss.to_spec();
    const auto streams = tta::make_validation_streams(cfg);
    const tta::Model model = tta::make_model(cfg);
    const tta::GridResult grid =
        tta::grid_search(model, spec, streams, cfg.grid.lr_grid, cfg.grid.t_grid, cfg.tta);
    report.write_file("grid.json", tta::grid_result_to_json(grid));
    std::string csv = "lr\\T";
    for (double t : grid.t_grid) csv += "," + std::to_string(t);
    csv += "\n";
    for (std::size_t li = 0; li < grid.lr_grid.size(); ++li) {
        csv += std::to_string(grid.lr_grid[li]);
        for (std::size_t ti = 0; ti < grid.t_grid.size(); ++ti)
            csv += "," + std::to_string(grid.errors.at(li, ti));
        csv += "\n";
    }
    report.write_file("grid.csv", csv);
    report.results()["best_lr"] = grid.best_lr;
    report.results()["best_temperature"] = grid.best_temperature;
    report.results()["best_error"] = grid.best_error;
    report.finish();
    std::cout << "grid best: lr " << grid.best_lr << ", T " << grid.best_temperature
              << ", error " << grid.best_error << "\n";
    return 0;
}

int cmd_meta_train(const tta::RunConfig& cfg) {
    Report report("meta-train", cfg.output_dir, cfg);
    const tta::MetaBenchResult bench = tta::run_meta_benchmark(cfg.meta, cfg.seed);
    report.write_file("meta_loss_net.json", bench.net.to_json_string());
    std::string traj = "iteration,objective\n";
    for (std::size_t i = 0; i < bench.trajectory.size(); ++i)
        traj += std::to_string(i) + "," + std::to_string(bench.trajectory[i]) + "\n";
    report.write_file("meta_trajectory.csv", traj);
    report.write_file("meta_slice.csv", tta::slice_to_csv(bench.slice));
    report.results()["holdout_initial"] = bench.holdout_initial;
    report.results()["holdout_final"] = bench.holdout_final;
    report.results()["entropy_fit"] = {{"alpha", bench.entropy_fit.alpha_mag},
                                       {"temperature", bench.entropy_fit.temperature},
                                       {"offset", bench.entropy_fit.offset},
                                       {"residual", bench.entropy_fit.residual}};
    report.results()["quadratic_fit"] = {{"a", bench.quadratic_fit.a},
                                         {"b", bench.quadratic_fit.b},
                                         {"c", bench.quadratic_fit.c},
                                         {"residual", bench.quadratic_fit.residual}};
    report.finish();
    std::cout << "meta-train: holdout task loss " << bench.holdout_initial << " -> "
              << bench.holdout_final << "; entropy-fit residual " << bench.entropy_fit.residual
              << ", quadratic residual " << bench.quadratic_fit.residual << "\n";
    return 0;
}

int cmd_slice(const tta::RunConfig& cfg) {
    Report report("slice", cfg.output_dir, cfg);
    std::function<double(const tta::Tensor&)> fn;
    if (cfg.slice.target == "net") {
        if (cfg.slice.net_file.empty()) throw tta::ConfigError("slice.net_file is required");
        fn = tta::net_slice_fn(tta::MetaLossNet::load(cfg.slice.net_file));
    } else {
        fn = tta::objective_slice_fn(cfg.slice.method, cfg.loss.to_spec(),
                                     cfg.slice.temperature);
    }
    const tta::Tensor base = tta::Tensor::vec(cfg.slice.base);
    const auto curve =
        tta::slice_export(fn, base, cfg.slice.dim, cfg.slice.lo, cfg.slice.hi, cfg.slice.steps);
    report.write_file("slice.csv", tta::slice_to_csv(curve));
    report.results()["points"] = curve.size();
    report.finish();
    std::cout << "slice: " << curve.size() << " points over [" << cfg.slice.lo << ", "
              << cfg.slice.hi << "]\n";
    return 0;
}

int cmd_check(const tta::RunConfig& cfg) {
    Report report("check", cfg.output_dir, cfg);
    const auto results = tta::run_invariant_checks(cfg.seed == 0 ? 17 : cfg.seed);
    bool all_pass = true;
    json items = json::array();
    for (const auto& r : results) {
        all_pass = all_pass && r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        items.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    }
    report.results()["checks"] = std::move(items);
    report.results()["all_pass"] = all_pass;
    report.finish();
    std::cout << (all_pass ? "all checks passed\n" : "some checks FAILED\n");
    return all_pass ? 0 : 1;
}

int cmd_shift_sweep(const tta::RunConfig& cfg) {
    Report report("shift-sweep", cfg.output_dir, cfg);
    const tta::ToySweepResult sweep = tta::run_shift_sweep(cfg.sweep.toy, cfg.sweep.seeds);
    report.write_file("sweep_summary.csv", sweep.summary_csv());
    for (const auto& cell : sweep.cells) {
        std::string csv = "step,accuracy\n";
        for (std::size_t i = 0; i < cell.step_accuracy_mean.size(); ++i)
            csv += std::to_string(i) + "," + std::to_string(cell.step_accuracy_mean[i]) + "\n";
        std::string name = "curve_lambda" + std::to_string(cell.lambda).substr(0, 4) + "_" +
                           tta::method_name(cell.method) + ".csv";
        report.write_file(name, csv);
    }
    json cells = json::array();
    for (const auto& cell : sweep.cells)
        cells.push_back({{"lambda", cell.lambda},
                         {"method", tta::method_name(cell.method)},
                         {"mean_accuracy", cell.mean_accuracy},
                         {"per_seed_accuracy", cell.per_seed_accuracy}});
    report.results()["cells"] = std::move(cells);
    report.results()["source_accuracy_per_seed"] = sweep.source_accuracy_per_seed;
    report.finish();
    std::cout << sweep.summary_csv();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"test-time adaptation toolkit"};
    app.set_version_flag("--version", tta::kVersion);
    app.require_subcommand(1);

    CommonArgs args;
    std::string subcommand;
    for (const char* name : {"gen-data", "train-source", "adapt", "grid", "meta-train", "slice",
                             "check", "shift-sweep"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("-c,--config", args.config_path, "JSON config file");
        sub->add_option("--set", args.overrides, "override config keys (key.path=value)");
        sub->add_option("-o,--output-dir", args.output_dir_flag, "output directory");
        sub->add_option("--seed", args.seed_flag, "override the run seed");
        sub->callback([&subcommand, name]() { subcommand = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const tta::RunConfig cfg = load_config(args);
        if (subcommand == "gen-data") return cmd_gen_data(cfg);
        if (subcommand == "train-source") return cmd_train_source(cfg);
        if (subcommand == "adapt") return cmd_adapt(cfg);
        if (subcommand == "grid") return cmd_grid(cfg);
        if (subcommand == "meta-train") return cmd_meta_train(cfg);
        if (subcommand == "slice") return cmd_slice(cfg);
        if (subcommand == "check") return cmd_check(cfg);
        if (subcommand == "shift-sweep") return cmd_shift_sweep(cfg);
        std::cerr << "unknown subcommand\n";
        return 2;
    } catch (const tta::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const tta::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const tta::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const tta::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
