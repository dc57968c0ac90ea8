// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Source classifiers: a linear model and a small MLP with batch-normalization
// layers, plus source training and the masked-parameter view used during
// test-time adaptation.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tta/autodiff.hpp"
#include "tta/losses.hpp"
#include "tta/rng.hpp"
#include "tta/tensor.hpp"

namespace tta {

enum class LayerKind { Affine, BatchNorm, Relu };

struct Layer {
    LayerKind kind;
    // affine
    Tensor w;  // [in x out]
    Tensor b;  // [out]
    // batch norm
    Tensor gamma, beta, running_mean, running_var;
    double eps = 1e-5;
};

enum class StatsMode { UseBatch, UseRunning };

enum class MaskMode { BnOnly, All };

struct ParamMask {
    MaskMode mode = MaskMode::All;
};

struct ParamRef {
    std::string name;
    Tensor* tensor;
};

struct BnBatchStats {
    std::size_t layer;
    Tensor mean, var;
};

class Model {
public:
    // linear: x W + b. bias included; no hidden layers.
    static Model linear(std::size_t input_dim, std::size_t output_dim, Rng& rng);
    // affine -> BN -> ReLU chain per hidden width, then affine to output_dim
    static Model mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t output_dim, Rng& rng);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    const std::string& architecture() const { return arch_; }
    const std::vector<std::size_t>& hidden_widths() const { return hidden_; }
    bool has_batch_norm() const;
    const std::vector<Layer>& layers() const { return layers_; }

    // Plain forward pass (no graph, running statistics untouched).
    // UseBatch requires batch size >= 2 when the model has BN layers.
    Tensor forward(const Tensor& x, StatsMode stats) const;

    struct GraphBuild {
        ad::Graph::NodeId logits;
        std::vector<std::pair<std::string, ad::Graph::NodeId>> leaves;  // masked params
        std::vector<BnBatchStats> bn_stats;  // batch statistics seen (UseBatch only)
    };
    // Forward pass through an autodiff graph. Parameters selected by `mask`
    // enter as leaves, everything else as constants.
    GraphBuild build_forward(ad::Graph& g, const Tensor& x, StatsMode stats,
                             const ParamMask& mask) const;

    // Identifiers + mutable views of exactly the masked parameters.
    // BnOnly on a model without BN layers throws ConfigError.
    std::vector<ParamRef> adaptable_params(const ParamMask& mask);
    std::vector<ParamRef> all_params() { return adaptable_params({MaskMode::All}); }

    void replace_running_stats(const std::vector<BnBatchStats>& stats);
    void ema_update_running_stats(const std::vector<BnBatchStats>& stats, double momentum);

    std::uint64_t checksum() const;  // FNV-1a over parameter and running-stat bytes

    std::string to_json_string() const;
    static Model from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    std::vector<Layer> layers_;
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
    std::vector<std::size_t> hidden_;
    std::string arch_;
};

struct TrainConfig {
    double lr = 0.1;
    int epochs = 50;
    std::size_t batch_size = 64;
    double momentum = 0.0;
    double bn_stats_momentum = 0.1;  // EMA factor for running statistics
};

struct Dataset;  // datagen.hpp

struct TrainResult {
    Model model;
    std::vector<double> epoch_losses;
};

// Mini-batch SGD on the supervised loss; deterministic given the rng seed.
// Non-finite loss throws DivergenceError naming the epoch/batch.
TrainResult train_source(Model model, const Dataset& data, const LossSpec& spec,
                         const TrainConfig& cfg, Rng rng);

// argmax class indices (multiclass) or ±1 by score sign (single-score models)
std::vector<int> predict(const Model& model, const Tensor& x, StatsMode stats);
double classification_error(const std::vector<int>& predicted, const std::vector<int>& truth);
double eval_error(const Model& model, const Dataset& data, StatsMode stats);

}  // namespace tta
