// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Online test-time adaptation: per-batch objective evaluation, one optimizer
// step on the masked parameters, prediction of the same batch with the
// post-update model, plus baseline objectives and (lr, T) grid search.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tta/autodiff.hpp"
#include "tta/datagen.hpp"
#include "tta/losses.hpp"
#include "tta/model.hpp"

namespace tta {

enum class Method { ConjugatePl, Entropy, HardPl, SoftPl, RobustPl, None };

const char* method_name(Method m);
Method parse_method(const std::string& name);

enum class OptimizerKind { Sgd, Adam };

struct TTAConfig {
    Method method = Method::ConjugatePl;
    double lr = 1e-2;
    double temperature = 1.0;
    ParamMask mask{MaskMode::BnOnly};
    std::optional<double> confidence_threshold;  // hard_pl only
    std::optional<double> q;                     // robust_pl only
    OptimizerKind optimizer = OptimizerKind::Sgd;
    std::size_t batch_size = 200;
    bool precomputed_labels = false;  // labels frozen from the model at stream start
    std::uint64_t seed = 0;
};

// Method-specific parameters must be present exactly when the method needs
// them; throws ConfigError otherwise.
void validate(const TTAConfig& cfg, const LossSpec& spec);

// Per-sample label payload captured from a fixed model state (precomputed-
// label ablation, and fixed-label gradient checks).
struct FrozenLabels {
    Tensor labels;                    // [n x logit_dim]; rows aligned with the stream
    std::vector<std::size_t> argmax;  // per-sample class index (robust/hard)
    std::vector<char> confident;     // hard_pl threshold mask
};
FrozenLabels freeze_labels(const Model& model, const Tensor& inputs, const LossSpec& spec,
                           const TTAConfig& cfg);

struct ObjectiveExtras {
    std::optional<double> confidence_threshold;
    std::optional<double> q;
    const FrozenLabels* frozen = nullptr;  // non-null => label-constant mode
    std::size_t frozen_offset = 0;         // row offset of this batch in the frozen table
};

// Builds the mean per-sample objective over a temperature-scaled logit batch.
ad::Graph::NodeId tta_objective_node(ad::Graph& g, Method method, const LossSpec& spec,
                                     ad::Graph::NodeId h_bar, const ObjectiveExtras& extras);

// Value-only convenience wrapper.
double tta_objective(Method method, const LossSpec& spec, const Tensor& h_bar,
                     const ObjectiveExtras& extras = {});

struct OptimizerState {
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments;  // adam m, v
    std::size_t step_count = 0;
};

struct StepResult {
    double objective = 0.0;
};

// Exactly one optimizer step on the masked parameters; pseudo-labels are
// recomputed from the current parameters unless cfg.precomputed_labels. BN
// running statistics are replaced by the batch statistics of this step.
// Throws DivergenceError on non-finite objective or gradient.
StepResult tta_step(Model& model, const Tensor& batch, const LossSpec& spec, const TTAConfig& cfg,
                    OptimizerState& opt, const FrozenLabels* frozen = nullptr,
                    std::size_t frozen_offset = 0);

struct BatchRecord {
    std::size_t index = 0;
    double loss = 0.0;   // objective value before the update
    double error = 0.0;  // post-update prediction error on the same batch
    std::size_t size = 0;
};

struct OnlineReport {
    std::vector<BatchRecord> per_batch;
    double mean_online_error = 0.0;  // batch-size weighted
    TTAConfig config;
    std::uint64_t final_model_checksum = 0;
};

// One pass over the stream: objective + update, then predict the same batch
// with the post-update model. method == None leaves the model untouched and
// scores with running statistics.
OnlineReport adapt_online(Model& model, const Dataset& stream, const LossSpec& spec,
                          const TTAConfig& cfg);

std::string online_report_to_json(const OnlineReport& report);
// "step,loss,error" rows
std::string online_report_to_csv(const OnlineReport& report);

struct GridResult {
    double best_lr = 0.0;
    double best_temperature = 0.0;
    double best_error = 0.0;
    std::vector<double> lr_grid, t_grid;
    Tensor errors;  // [lr x T] mean validation error; 1.0 for diverged cells
};

// Runs adapt_online per (lr, T) per validation stream on a fresh copy of the
// model; picks the minimizing pair, ties broken by smaller lr then smaller T.
// A cell that diverges records error 1.0 and the search continues.
GridResult grid_search(const Model& model, const LossSpec& spec,
                       const std::vector<Dataset>& val_streams,
                       const std::vector<double>& lr_grid, const std::vector<double>& t_grid,
                       const TTAConfig& base);

std::string grid_result_to_json(const GridResult& grid);

}  // namespace tta
