// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/tta_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "tta/errors.hpp"
#include "tta/json_util.hpp"

namespace tta {

const char* method_name(Method m) {
    switch (m) {
        case Method::ConjugatePl: return "conjugate_pl";
        case Method::Entropy: return "entropy";
        case Method::HardPl: return "hard_pl";
        case Method::SoftPl: return "soft_pl";
        case Method::RobustPl: return "robust_pl";
        case Method::None: return "none";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "conjugate_pl") return Method::ConjugatePl;
    if (name == "entropy") return Method::Entropy;
    if (name == "hard_pl") return Method::HardPl;
    if (name == "soft_pl") return Method::SoftPl;
    if (name == "robust_pl") return Method::RobustPl;
    if (name == "none") return Method::None;
    throw ConfigError("unknown adaptation method: " + name);
}

void validate(const TTAConfig& cfg, const LossSpec& spec) {
    if (cfg.lr < 0.0) throw ConfigError("tta lr must be >= 0");
    if (!(cfg.temperature > 0.0)) throw ConfigError("tta temperature must be > 0");
    if (cfg.batch_size < 2) throw ConfigError("tta batch_size must be >= 2");
    if (cfg.method == Method::HardPl) {
        if (!cfg.confidence_threshold)
            throw ConfigError("hard_pl requires confidence_threshold");
        if (*cfg.confidence_threshold < 0.0 || *cfg.confidence_threshold > 1.0)
            throw ConfigError("confidence_threshold must lie in [0, 1]");
    } else if (cfg.confidence_threshold) {
        throw ConfigError("confidence_threshold is only valid for hard_pl");
    }
    if (cfg.method == Method::RobustPl) {
        if (!cfg.q) throw ConfigError("robust_pl requires q");
        if (!(*cfg.q > 0.0) || *cfg.q > 1.0) throw ConfigError("q must lie in (0, 1]");
    } else if (cfg.q) {
        throw ConfigError("q is only valid for robust_pl");
    }
    (void)spec;
}

namespace {

using NodeId = ad::Graph::NodeId;

bool is_binary_score(const LossSpec& spec) { return spec.logit_dim() == 1; }

// [m x 1] score column -> [m x 2] logits [z, 0], so softmax gives (sigma, 1-sigma)
NodeId binary_embed(ad::Graph& g, NodeId z) {
    return g.matmul(z, g.constant(Tensor::mat(1, 2, {1.0, 0.0})));
}

// per-sample pseudo-label material computed from a logit batch (values only)
struct BatchLabels {
    Tensor labels;                    // [m x logit_dim]
    std::vector<std::size_t> argmax;  // class index per sample
    std::vector<char> confident;
};

BatchLabels labels_from_logits(const Tensor& h_bar, const LossSpec& spec, Method method,
                               std::optional<double> threshold) {
    const std::size_t m = h_bar.rows();
    BatchLabels out;
    out.labels = Tensor({m, spec.logit_dim()});
    out.argmax.resize(m);
    out.confident.assign(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        if (is_binary_score(spec)) {
            const double z = h_bar.at(i, 0);
            const double p = sigmoid(z);
            out.argmax[i] = z >= 0.0 ? 0 : 1;
            if (threshold && std::max(p, 1.0 - p) < *threshold) out.confident[i] = 0;
            switch (method) {
                case Method::HardPl:
                    out.labels.at(i, 0) = z >= 0.0 ? 1.0 : -1.0;
                    break;
                case Method::SoftPl:
                    out.labels.at(i, 0) = 2.0 * p - 1.0;
                    break;
                case Method::ConjugatePl:
                    out.labels.at(i, 0) = std::tanh(z);
                    break;
                default:
                    break;
            }
        } else {
            Tensor row({spec.logit_dim()});
            for (std::size_t j = 0; j < row.numel(); ++j) row[j] = h_bar.at(i, j);
            const Tensor probs = softmax(row);
            const std::size_t best = tta::argmax(row);
            out.argmax[i] = best;
            if (threshold && probs[best] < *threshold) out.confident[i] = 0;
            switch (method) {
                case Method::HardPl:
                    out.labels.at(i, best) = 1.0;
                    break;
                case Method::SoftPl:
                    for (std::size_t j = 0; j < probs.numel(); ++j)
                        out.labels.at(i, j) = probs[j];
                    break;
                case Method::ConjugatePl: {
                    const Tensor y = spec.conjugate_pseudolabel(row);
                    for (std::size_t j = 0; j < y.numel(); ++j) out.labels.at(i, j) = y[j];
                    break;
                }
                default:
                    break;
            }
        }
    }
    return out;
}

BatchLabels slice_frozen(const FrozenLabels& frozen, std::size_t offset, std::size_t m) {
    BatchLabels out;
    out.labels = Tensor({m, frozen.labels.cols()});
    out.argmax.resize(m);
    out.confident.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < frozen.labels.cols(); ++j)
            out.labels.at(i, j) = frozen.labels.at(offset + i, j);
        out.argmax[i] = frozen.argmax[offset + i];
        out.confident[i] = frozen.confident[offset + i];
    }
    return out;
}

NodeId hard_pl_node(ad::Graph& g, const LossSpec& spec, NodeId h_bar, const BatchLabels& bl) {
    const std::size_t m = g.value(h_bar).rows();
    std::size_t included = 0;
    Tensor mask({m});
    for (std::size_t i = 0; i < m; ++i)
        if (bl.confident[i]) {
            mask[i] = 1.0;
            ++included;
        }
    if (included == 0) return g.constant_scalar(0.0);
    const auto rows = spec.supervised_rows_node(g, h_bar, bl.labels);
    return g.scale(g.sum_all(g.mul(rows, g.constant(mask))), 1.0 / double(included));
}

NodeId robust_pl_node(ad::Graph& g, const LossSpec& spec, NodeId h_bar, double q,
                      const BatchLabels& bl) {
    NodeId probs_in = is_binary_score(spec) ? binary_embed(g, h_bar) : h_bar;
    const auto probs = g.softmax_rows(probs_in);
    const std::size_t m = g.value(probs).rows();
    const std::size_t k = g.value(probs).cols();
    Tensor pick({m, k});
    for (std::size_t i = 0; i < m; ++i) pick.at(i, bl.argmax[i]) = 1.0;
    const auto p_top = g.sum_rows(g.mul(probs, g.constant(pick)));
    const auto ones = g.constant(Tensor::filled({m}, 1.0));
    return g.scale(g.mean_all(g.sub(ones, g.pow_const(p_top, q))), 1.0 / q);
}

}  // namespace

FrozenLabels freeze_labels(const Model& model, const Tensor& inputs, const LossSpec& spec,
                           const TTAConfig& cfg) {
    const Tensor logits = model.forward(inputs, StatsMode::UseRunning);
    const Tensor h_bar = tta::scale(logits, 1.0 / cfg.temperature);
    const BatchLabels bl =
        labels_from_logits(h_bar, spec, cfg.method, cfg.confidence_threshold);
    return FrozenLabels{bl.labels, bl.argmax, bl.confident};
}

ad::Graph::NodeId tta_objective_node(ad::Graph& g, Method method, const LossSpec& spec,
                                     ad::Graph::NodeId h_bar, const ObjectiveExtras& extras) {
    const Tensor& hv = g.value(h_bar);
    if (hv.rank() != 2 || hv.rows() == 0)
        throw DimensionError("tta objective requires a nonempty logit batch");
    if (hv.cols() != spec.logit_dim())
        throw ConfigError("objective/loss dimension mismatch: batch has " +
                          std::to_string(hv.cols()) + " logits, loss expects " +
                          std::to_string(spec.logit_dim()));

    auto current_labels = [&](Method m) {
        if (extras.frozen)
            return slice_frozen(*extras.frozen, extras.frozen_offset, hv.rows());
        return labels_from_logits(hv, spec, m, extras.confidence_threshold);
    };

    switch (method) {
        case Method::None:
            return g.constant_scalar(0.0);
        case Method::ConjugatePl:
            if (extras.frozen) {
                const BatchLabels bl = current_labels(Method::ConjugatePl);
                return spec.supervised_mean_node(g, h_bar, bl.labels);
            }
            return spec.conjugate_mean_node(g, h_bar);
        case Method::Entropy:
            return softmax_entropy_mean_node(g, is_binary_score(spec) ? binary_embed(g, h_bar)
                                                                      : h_bar);
        case Method::SoftPl: {
            const BatchLabels bl = current_labels(Method::SoftPl);
            return spec.supervised_mean_node(g, h_bar, bl.labels);
        }
        case Method::HardPl: {
            if (!extras.confidence_threshold && !extras.frozen)
                throw ConfigError("hard_pl requires confidence_threshold");
            const BatchLabels bl = current_labels(Method::HardPl);
            return hard_pl_node(g, spec, h_bar, bl);
        }
        case Method::RobustPl: {
            if (!extras.q) throw ConfigError("robust_pl requires q");
            const BatchLabels bl = current_labels(Method::RobustPl);
            return robust_pl_node(g, spec, h_bar, *extras.q, bl);
        }
    }
    throw ConfigError("unknown adaptation method");
}

double tta_objective(Method method, const LossSpec& spec, const Tensor& h_bar,
                     const ObjectiveExtras& extras) {
    ad::Graph g;
    const auto h = g.constant(h_bar);
    return g.value(tta_objective_node(g, method, spec, h, extras)).value();
}

StepResult tta_step(Model& model, const Tensor& batch, const LossSpec& spec, const TTAConfig& cfg,
                    OptimizerState& opt, const FrozenLabels* frozen, std::size_t frozen_offset) {
    validate(cfg, spec);
    if (cfg.method == Method::None) return {0.0};
    auto refs = model.adaptable_params(cfg.mask);  // validates the mask
    if (model.has_batch_norm() && batch.rows() < 2)
        throw ContractError("tta_step requires batch size >= 2 for batch statistics");

    ad::Graph g;
    const auto build = model.build_forward(g, batch, StatsMode::UseBatch, cfg.mask);
    const auto h_bar = g.scale(build.logits, 1.0 / cfg.temperature);

    ObjectiveExtras extras;
    extras.confidence_threshold = cfg.confidence_threshold;
    extras.q = cfg.q;
    extras.frozen = frozen;
    extras.frozen_offset = frozen_offset;
    const auto obj = tta_objective_node(g, cfg.method, spec, h_bar, extras);
    const double objective = g.value(obj).value();
    if (!std::isfinite(objective)) throw DivergenceError("tta_step: non-finite objective");

    const auto grads = g.backward(obj);
    opt.step_count += 1;
    for (std::size_t pi = 0; pi < build.leaves.size(); ++pi) {
        const auto& [name, node] = build.leaves[pi];
        const Tensor& gp = grads[node];
        if (!gp.all_finite())
            throw DivergenceError("tta_step: non-finite gradient for " + name);
        Tensor& p = *refs[pi].tensor;
        if (cfg.optimizer == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < p.numel(); ++i) p[i] -= cfg.lr * gp[i];
        } else {
            constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
            auto& [m1, m2] = opt.moments[name];
            if (m1.empty()) {
                m1 = Tensor::zeros_like(p);
                m2 = Tensor::zeros_like(p);
            }
            const double c1 = 1.0 - std::pow(b1, double(opt.step_count));
            const double c2 = 1.0 - std::pow(b2, double(opt.step_count));
            for (std::size_t i = 0; i < p.numel(); ++i) {
                m1[i] = b1 * m1[i] + (1.0 - b1) * gp[i];
                m2[i] = b2 * m2[i] + (1.0 - b2) * gp[i] * gp[i];
                p[i] -= cfg.lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
            }
        }
        if (!p.all_finite())
            throw DivergenceError("tta_step: non-finite parameter " + name + " after update");
    }
    model.replace_running_stats(build.bn_stats);
    return {objective};
}

namespace {

Tensor rows_range(const Tensor& x, std::size_t lo, std::size_t hi) {
    Tensor out({hi - lo, x.cols()});
    for (std::size_t i = lo; i < hi; ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i - lo, j) = x.at(i, j);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t lo = 0; lo < n; lo += batch_size) {
        std::size_t hi = std::min(n, lo + batch_size);
        if (hi < n && n - hi == 1) hi = n;  // fold a trailing singleton
        out.emplace_back(lo, hi);
        if (hi == n) break;
    }
    return out;
}

}  // namespace

OnlineReport adapt_online(Model& model, const Dataset& stream, const LossSpec& spec,
                          const TTAConfig& cfg) {
    validate(cfg, spec);
    const std::size_t n = stream.labels.size();
    if (n == 0) throw ConfigError("adapt_online: empty stream");

    FrozenLabels frozen;
    const bool use_frozen = cfg.precomputed_labels && cfg.method != Method::None &&
                            cfg.method != Method::Entropy;
    if (use_frozen) frozen = freeze_labels(model, stream.inputs, spec, cfg);

    OnlineReport report;
    report.config = cfg;
    OptimizerState opt;
    const StatsMode pred_mode =
        model.has_batch_norm() ? StatsMode::UseBatch : StatsMode::UseRunning;

    double weighted_error = 0.0;
    const auto ranges = batch_ranges(n, cfg.batch_size);
    for (std::size_t bi = 0; bi < ranges.size(); ++bi) {
        const auto [lo, hi] = ranges[bi];
        const Tensor xb = rows_range(stream.inputs, lo, hi);
        const std::vector<int> yb(stream.labels.begin() + lo, stream.labels.begin() + hi);

        BatchRecord rec;
        rec.index = bi;
        rec.size = hi - lo;
        if (cfg.method == Method::None) {
            rec.loss = 0.0;
            rec.error = classification_error(predict(model, xb, StatsMode::UseRunning), yb);
        } else {
            try {
                rec.loss = tta_step(model, xb, spec, cfg, opt, use_frozen ? &frozen : nullptr, lo)
                               .objective;
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " (batch " + std::to_string(bi) +
                                      ")");
            }
            rec.error = classification_error(predict(model, xb, pred_mode), yb);
        }
        weighted_error += rec.error * double(rec.size);
        report.per_batch.push_back(rec);
    }
    report.mean_online_error = weighted_error / double(n);
    report.final_model_checksum = model.checksum();
    return report;
}

namespace {

json config_to_json(const TTAConfig& cfg) {
    json j;
    j["method"] = method_name(cfg.method);
    j["lr"] = cfg.lr;
    j["temperature"] = cfg.temperature;
    j["mask"] = cfg.mask.mode == MaskMode::BnOnly ? "bn_only" : "all";
    if (cfg.confidence_threshold) j["confidence_threshold"] = *cfg.confidence_threshold;
    if (cfg.q) j["q"] = *cfg.q;
    j["optimizer"] = cfg.optimizer == OptimizerKind::Sgd ? "sgd" : "adam";
    j["batch_size"] = cfg.batch_size;
    j["precomputed_labels"] = cfg.precomputed_labels;
    j["seed"] = cfg.seed;
    return j;
}

}  // namespace

std::string online_report_to_json(const OnlineReport& report) {
    json j;
    j["config"] = config_to_json(report.config);
    json batches = json::array();
    for (const auto& b : report.per_batch)
        batches.push_back(
            {{"batch", b.index}, {"loss", b.loss}, {"error", b.error}, {"size", b.size}});
    j["per_batch"] = std::move(batches);
    j["mean_online_error"] = report.mean_online_error;
    std::ostringstream os;
    os << std::hex << report.final_model_checksum;
    j["final_model_checksum"] = os.str();
    return j.dump(2);
}

std::string online_report_to_csv(const OnlineReport& report) {
    std::string out = "step,loss,error\n";
    char buf[64];
    for (const auto& b : report.per_batch) {
        out += std::to_string(b.index);
        out += ',';
        auto r1 = std::to_chars(buf, buf + sizeof(buf), b.loss);
        out.append(buf, r1.ptr);
        out += ',';
        auto r2 = std::to_chars(buf, buf + sizeof(buf), b.error);
        out.append(buf, r2.ptr);
        out += '\n';
    }
    return out;
}

GridResult grid_search(const Model& model, const LossSpec& spec,
                       const std::vector<Dataset>& val_streams,
                       const std::vector<double>& lr_grid, const std::vector<double>& t_grid,
                       const TTAConfig& base) {
    if (lr_grid.empty() || t_grid.empty()) throw ConfigError("grid_search: empty grid");
    if (val_streams.empty()) throw ConfigError("grid_search: no validation streams");

    GridResult out;
    out.lr_grid = lr_grid;
    out.t_grid = t_grid;
    out.errors = Tensor({lr_grid.size(), t_grid.size()});
    bool have_best = false;

    for (std::size_t li = 0; li < lr_grid.size(); ++li) {
        for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
            TTAConfig cfg = base;
            cfg.lr = lr_grid[li];
            cfg.temperature = t_grid[ti];
            double err_sum = 0.0;
            bool diverged = false;
            for (const auto& stream : val_streams) {
                Model trial = model;
                try {
                    err_sum += adapt_online(trial, stream, spec, cfg).mean_online_error;
                } catch (const DivergenceError&) {
                    diverged = true;
                    break;
                } catch (const NumericalError&) {
                    diverged = true;
                    break;
                }
            }
            const double cell = diverged ? 1.0 : err_sum / double(val_streams.size());
            out.errors.at(li, ti) = cell;
            const bool better =
                !have_best || cell < out.best_error ||
                (cell == out.best_error &&
                 (lr_grid[li] < out.best_lr ||
                  (lr_grid[li] == out.best_lr && t_grid[ti] < out.best_temperature)));
            if (better) {
                have_best = true;
                out.best_error = cell;
                out.best_lr = lr_grid[li];
                out.best_temperature = t_grid[ti];
            }
        }
    }
    return out;
}

std::string grid_result_to_json(const GridResult& grid) {
    json j;
    j["best_lr"] = grid.best_lr;
    j["best_temperature"] = grid.best_temperature;
    j["best_error"] = grid.best_error;
    j["lr_grid"] = grid.lr_grid;
    j["t_grid"] = grid.t_grid;
    j["errors"] = tensor_to_json(grid.errors);
    return j.dump(2);
}

}  // namespace tta
