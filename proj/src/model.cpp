// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tta/datagen.hpp"
#include "tta/errors.hpp"
#include "tta/json_util.hpp"

namespace tta {

namespace {

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

Layer affine_layer(std::size_t in, std::size_t out, double stddev, Rng& rng) {
    Layer l;
    l.kind = LayerKind::Affine;
    l.w = gaussian_matrix(in, out, stddev, rng);
    l.b = Tensor({out});
    return l;
}

Layer bn_layer(std::size_t width) {
    Layer l;
    l.kind = LayerKind::BatchNorm;
    l.gamma = Tensor::filled({width}, 1.0);
    l.beta = Tensor({width});
    l.running_mean = Tensor({width});
    l.running_var = Tensor::filled({width}, 1.0);
    return l;
}

}  // namespace

Model Model::linear(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
    // 1/d keeps initial scores small; the exponential loss is not robust to
    // large initial score tails
    Model m;
    m.input_dim_ = input_dim;
    m.output_dim_ = output_dim;
    m.arch_ = "linear";
    m.layers_.push_back(affine_layer(input_dim, output_dim, 1.0 / double(input_dim), rng));
    return m;
}

Model Model::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                 std::size_t output_dim, Rng& rng) {
    Model m;
    m.input_dim_ = input_dim;
    m.output_dim_ = output_dim;
    m.hidden_ = hidden;
    m.arch_ = "mlp";
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
        m.layers_.push_back(affine_layer(in, width, std::sqrt(2.0 / double(in)), rng));
        m.layers_.push_back(bn_layer(width));
        Layer r;
        r.kind = LayerKind::Relu;
        m.layers_.push_back(r);
        in = width;
    }
    m.layers_.push_back(affine_layer(in, output_dim, 1.0 / std::sqrt(double(in)), rng));
    return m;
}

bool Model::has_batch_norm() const {
    for (const auto& l : layers_)
        if (l.kind == LayerKind::BatchNorm) return true;
    return false;
}

Tensor Model::forward(const Tensor& x, StatsMode stats) const {
    if (x.rank() != 2 || x.cols() != input_dim_)
        throw DimensionError("forward: input shape " + x.shape_str() + " does not match input dim " +
                             std::to_string(input_dim_));
    if (x.rows() == 0) throw DimensionError("forward: empty batch");
    Tensor cur = x;
    for (const auto& l : layers_) {
        switch (l.kind) {
            case LayerKind::Affine: {
                Tensor z = matmul(cur, l.w);
                for (std::size_t i = 0; i < z.rows(); ++i)
                    for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) += l.b[j];
                cur = std::move(z);
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t m = cur.rows(), n = cur.cols();
                Tensor out({m, n});
                if (stats == StatsMode::UseBatch) {
                    if (m < 2)
                        throw ContractError("batch-statistics forward requires batch size >= 2");
                    for (std::size_t j = 0; j < n; ++j) {
                        double mu = 0.0;
                        for (std::size_t i = 0; i < m; ++i) mu += cur.at(i, j);
                        mu /= double(m);
                        double var = 0.0;
                        for (std::size_t i = 0; i < m; ++i) {
                            const double d = cur.at(i, j) - mu;
                            var += d * d;
                        }
                        var /= double(m);
                        const double inv = 1.0 / std::sqrt(var + l.eps);
                        for (std::size_t i = 0; i < m; ++i)
                            out.at(i, j) = l.gamma[j] * ((cur.at(i, j) - mu) * inv) + l.beta[j];
                    }
                } else {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double inv = 1.0 / std::sqrt(l.running_var[j] + l.eps);
                        for (std::size_t i = 0; i < m; ++i)
                            out.at(i, j) =
                                l.gamma[j] * ((cur.at(i, j) - l.running_mean[j]) * inv) + l.beta[j];
                    }
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::Relu: {
                for (std::size_t i = 0; i < cur.numel(); ++i)
                    if (cur[i] < 0.0) cur[i] = 0.0;
                break;
            }
        }
    }
    return cur;
}

Model::GraphBuild Model::build_forward(ad::Graph& g, const Tensor& x, StatsMode stats,
                                       const ParamMask& mask) const {
    if (x.rank() != 2 || x.cols() != input_dim_)
        throw DimensionError("build_forward: bad input shape " + x.shape_str());
    GraphBuild out;
    const bool adapt_all = mask.mode == MaskMode::All;

    auto param_node = [&](const Tensor& t, bool adaptable, const std::string& name) {
        if (adaptable) {
            const auto id = g.leaf(t);
            out.leaves.emplace_back(name, id);
            return id;
        }
        return g.constant(t);
    };

    ad::Graph::NodeId cur = g.constant(x);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const Layer& l = layers_[li];
        const std::string prefix = "layer" + std::to_string(li) + ".";
        switch (l.kind) {
            case LayerKind::Affine: {
                const auto w = param_node(l.w, adapt_all, prefix + "w");
                const auto b = param_node(l.b, adapt_all, prefix + "b");
                cur = g.add_rowvec(g.matmul(cur, w), b);
                break;
            }
            case LayerKind::BatchNorm: {
                const auto gamma = param_node(l.gamma, true, prefix + "gamma");
                const auto beta = param_node(l.beta, true, prefix + "beta");
                if (stats == StatsMode::UseBatch) {
                    const Tensor& xv = g.value(cur);
                    const std::size_t m = xv.rows(), n = xv.cols();
                    if (m < 2)
                        throw ContractError("batch-statistics forward requires batch size >= 2");
                    BnBatchStats bs{li, Tensor({n}), Tensor({n})};
                    for (std::size_t j = 0; j < n; ++j) {
                        double mu = 0.0;
                        for (std::size_t i = 0; i < m; ++i) mu += xv.at(i, j);
                        mu /= double(m);
                        double var = 0.0;
                        for (std::size_t i = 0; i < m; ++i) {
                            const double d = xv.at(i, j) - mu;
                            var += d * d;
                        }
                        bs.mean[j] = mu;
                        bs.var[j] = var / double(m);
                    }
                    out.bn_stats.push_back(std::move(bs));
                    cur = g.add_rowvec(g.mul_rowvec(g.batchnorm_cols(cur, l.eps), gamma), beta);
                } else {
                    // normalization by stored statistics is an affine constant map
                    const Tensor& xv = g.value(cur);
                    Tensor normalized = xv;
                    for (std::size_t j = 0; j < xv.cols(); ++j) {
                        const double inv = 1.0 / std::sqrt(l.running_var[j] + l.eps);
                        for (std::size_t i = 0; i < xv.rows(); ++i)
                            normalized.at(i, j) = (xv.at(i, j) - l.running_mean[j]) * inv;
                    }
                    cur = g.add_rowvec(g.mul_rowvec(g.constant(normalized), gamma), beta);
                }
                break;
            }
            case LayerKind::Relu:
                cur = g.relu(cur);
                break;
        }
    }
    out.logits = cur;
    return out;
}

std::vector<ParamRef> Model::adaptable_params(const ParamMask& mask) {
    std::vector<ParamRef> refs;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        Layer& l = layers_[li];
        const std::string prefix = "layer" + std::to_string(li) + ".";
        if (l.kind == LayerKind::Affine && mask.mode == MaskMode::All) {
            refs.push_back({prefix + "w", &l.w});
            refs.push_back({prefix + "b", &l.b});
        } else if (l.kind == LayerKind::BatchNorm) {
            refs.push_back({prefix + "gamma", &l.gamma});
            refs.push_back({prefix + "beta", &l.beta});
        }
    }
    if (mask.mode == MaskMode::BnOnly && refs.empty())
        throw ConfigError("bn_only parameter mask on a model without batch-norm layers");
    return refs;
}

void Model::replace_running_stats(const std::vector<BnBatchStats>& stats) {
    for (const auto& s : stats) {
        Layer& l = layers_.at(s.layer);
        l.running_mean = s.mean;
        l.running_var = s.var;
    }
}

void Model::ema_update_running_stats(const std::vector<BnBatchStats>& stats, double momentum) {
    for (const auto& s : stats) {
        Layer& l = layers_.at(s.layer);
        for (std::size_t j = 0; j < s.mean.numel(); ++j) {
            l.running_mean[j] = (1.0 - momentum) * l.running_mean[j] + momentum * s.mean[j];
            l.running_var[j] = (1.0 - momentum) * l.running_var[j] + momentum * s.var[j];
        }
    }
}

std::uint64_t Model::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const Tensor& t) {
        for (double v : t.data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int s = 0; s < 64; s += 8) {
                h ^= (bits >> s) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    };
    for (const auto& l : layers_) {
        feed(l.w);
        feed(l.b);
        feed(l.gamma);
        feed(l.beta);
        feed(l.running_mean);
        feed(l.running_var);
    }
    return h;
}

std::string Model::to_json_string() const {
    json doc;
    doc["format_version"] = 1;
    doc["architecture"] = {{"type", arch_},
                           {"input_dim", input_dim_},
                           {"output_dim", output_dim_},
                           {"hidden", hidden_}};
    json layers = json::array();
    for (const auto& l : layers_) {
        json lj;
        switch (l.kind) {
            case LayerKind::Affine:
                lj["kind"] = "affine";
                lj["w"] = tensor_to_json(l.w);
                lj["b"] = tensor_to_json(l.b);
                break;
            case LayerKind::BatchNorm:
                lj["kind"] = "batch_norm";
                lj["gamma"] = tensor_to_json(l.gamma);
                lj["beta"] = tensor_to_json(l.beta);
                lj["running_mean"] = tensor_to_json(l.running_mean);
                lj["running_var"] = tensor_to_json(l.running_var);
                lj["eps"] = l.eps;
                break;
            case LayerKind::Relu:
                lj["kind"] = "relu";
                break;
        }
        layers.push_back(std::move(lj));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2);
}

Model Model::from_json_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("malformed model JSON: ") + e.what());
    }
    if (!doc.contains("format_version") || doc["format_version"].get<int>() != 1)
        throw IoError("unsupported model format_version");
    Model m;
    const auto& arch = doc.at("architecture");
    m.arch_ = arch.at("type").get<std::string>();
    m.input_dim_ = arch.at("input_dim").get<std::size_t>();
    m.output_dim_ = arch.at("output_dim").get<std::size_t>();
    m.hidden_ = arch.value("hidden", std::vector<std::size_t>{});
    for (const auto& lj : doc.at("layers")) {
        Layer l;
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "affine") {
            l.kind = LayerKind::Affine;
            l.w = tensor_from_json(lj.at("w"));
            l.b = tensor_from_json(lj.at("b"));
        } else if (kind == "batch_norm") {
            l.kind = LayerKind::BatchNorm;
            l.gamma = tensor_from_json(lj.at("gamma"));
            l.beta = tensor_from_json(lj.at("beta"));
            l.running_mean = tensor_from_json(lj.at("running_mean"));
            l.running_var = tensor_from_json(lj.at("running_var"));
            l.eps = lj.at("eps").get<double>();
        } else if (kind == "relu") {
            l.kind = LayerKind::Relu;
        } else {
            throw IoError("unknown layer kind: " + kind);
        }
        m.layers_.push_back(std::move(l));
    }
    return m;
}

void Model::save(const std::string& path) const { write_text_file(path, to_json_string()); }

Model Model::load(const std::string& path) { return from_json_string(read_text_file(path)); }

namespace {

Tensor slice_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t lo,
                  std::size_t hi) {
    Tensor out({hi - lo, x.cols()});
    for (std::size_t r = lo; r < hi; ++r)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(r - lo, j) = x.at(idx[r], j);
    return out;
}

}  // namespace

TrainResult train_source(Model model, const Dataset& data, const LossSpec& spec,
                         const TrainConfig& cfg, Rng rng) {
    const std::size_t n = data.labels.size();
    if (n == 0) throw ConfigError("train_source: empty dataset");
    const Tensor targets = encode_labels(spec, data.labels);

    std::vector<Tensor> velocity;
    std::vector<double> epoch_losses;
    const ParamMask all_mask{MaskMode::All};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto order = rng.permutation(n);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        std::size_t batch_index = 0;
        for (std::size_t lo = 0; lo < n; lo += cfg.batch_size, ++batch_index) {
            std::size_t hi = std::min(n, lo + cfg.batch_size);
            // fold a trailing singleton into the previous batch so BN batch
            // statistics stay defined
            if (hi < n && n - hi == 1) hi = n;
            Tensor xb = slice_rows(data.inputs, order, lo, hi);
            Tensor yb({hi - lo, targets.cols()});
            for (std::size_t r = lo; r < hi; ++r)
                for (std::size_t j = 0; j < targets.cols(); ++j)
                    yb.at(r - lo, j) = targets.at(order[r], j);

            ad::Graph g;
            auto build = model.build_forward(g, xb, StatsMode::UseBatch, all_mask);
            const auto obj = spec.supervised_mean_node(g, build.logits, yb);
            const double loss = g.value(obj).value();
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "train_source diverged: non-finite loss at epoch " << epoch << " batch "
                   << batch_index;
                throw DivergenceError(os.str());
            }
            const auto grads = g.backward(obj);

            auto refs = model.adaptable_params(all_mask);
            if (velocity.empty())
                for (const auto& r : refs) velocity.push_back(Tensor::zeros_like(*r.tensor));
            for (std::size_t pi = 0; pi < refs.size(); ++pi) {
                const Tensor& gp = grads[build.leaves[pi].second];
                Tensor& p = *refs[pi].tensor;
                Tensor& v = velocity[pi];
                for (std::size_t i = 0; i < p.numel(); ++i) {
                    v[i] = cfg.momentum * v[i] + gp[i];
                    p[i] -= cfg.lr * v[i];
                }
            }
            model.ema_update_running_stats(build.bn_stats, cfg.bn_stats_momentum);

            loss_sum += loss * double(hi - lo);
            seen += hi - lo;
            if (hi == n) break;
        }
        epoch_losses.push_back(loss_sum / double(seen));
    }
    return {std::move(model), std::move(epoch_losses)};
}

std::vector<int> predict(const Model& model, const Tensor& x, StatsMode stats) {
    const Tensor logits = model.forward(x, stats);
    std::vector<int> out(logits.rows());
    if (model.output_dim() == 1) {
        for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = logits.at(i, 0) >= 0.0 ? 1 : -1;
    } else {
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols(); ++j)
                if (logits.at(i, j) > logits.at(i, best)) best = j;
            out[i] = static_cast<int>(best);
        }
    }
    return out;
}

double classification_error(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw DimensionError("classification_error: label count mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] != truth[i]) ++wrong;
    return double(wrong) / double(predicted.size());
}

double eval_error(const Model& model, const Dataset& data, StatsMode stats) {
    return classification_error(predict(model, data.inputs, stats), data.labels);
}

}  // namespace tta
