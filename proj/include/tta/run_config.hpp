// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration: strict schema validation (unknown keys rejected,
// offending key named), defaults materialized so reports can echo every
// effective value.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tta/bench.hpp"
#include "tta/datagen.hpp"
#include "tta/json_util.hpp"
#include "tta/losses.hpp"
#include "tta/meta_loss.hpp"
#include "tta/model.hpp"
#include "tta/tta_engine.hpp"

namespace tta {

struct DataConfig {
    enum class Kind { GaussianShift, Csv };
    Kind kind = Kind::GaussianShift;
    GaussianShiftSpec gshift;
    std::size_t n_per_class_train = 2000;
    std::size_t n_per_class_test = 2500;
    std::vector<double> val_lambdas = {0.5};  // validation shifts for grid search
    std::string train_csv, test_csv;
    bool multiclass_labels = false;  // relabel ±1 as class indices
};

struct ModelConfig {
    std::string type = "linear";  // "linear" | "mlp"
    std::size_t input_dim = 100;
    std::size_t output_dim = 1;
    std::vector<std::size_t> hidden = {64, 64};
    std::string file;  // when set, load instead of constructing
};

struct LossConfig {
    LossKind kind = LossKind::Exponential;
    double epsilon = 0.0;
    std::size_t num_classes = 2;
    LossSpec to_spec() const { return LossSpec::make(kind, {epsilon}, num_classes); }
};

struct GridConfig {
    std::vector<double> lr_grid = {1e-1, 1e-2, 1e-3, 1e-4};
    std::vector<double> t_grid = {1, 2, 3, 4, 5};
};

struct SliceConfig {
    std::string target = "objective";  // "objective" | "net"
    std::string net_file;
    Method method = Method::Entropy;
    std::vector<double> base = {0.0, 0.0};
    std::size_t dim = 0;
    double lo = -5.0, hi = 5.0;
    std::size_t steps = 41;
    double temperature = 1.0;
};

struct SweepConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    ToyShiftConfig toy;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    DataConfig data;
    ModelConfig model;
    LossConfig loss;
    TTAConfig tta;
    TrainConfig train;
    GridConfig grid;
    MetaBenchConfig meta;
    SliceConfig slice;
    SweepConfig sweep;

    static RunConfig from_json(const json& doc);  // strict; ConfigError names bad keys
    json effective_json() const;                  // all defaults materialized
};

// Constructing pipeline inputs from the config.
Dataset make_train_dataset(const RunConfig& cfg);
Dataset make_test_stream(const RunConfig& cfg);
std::vector<Dataset> make_validation_streams(const RunConfig& cfg);
Model make_model(const RunConfig& cfg);

}  // namespace tta
