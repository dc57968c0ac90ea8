// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/meta_loss.hpp"

#include <charconv>
#include <cmath>

#include "tta/errors.hpp"
#include "tta/json_util.hpp"
#include "tta/linalg.hpp"

namespace tta {

MetaLossNet MetaLossNet::create(std::size_t num_classes, std::size_t hidden, Rng& rng,
                                bool zero_final) {
    if (num_classes < 2) throw ConfigError("meta loss net requires num_classes >= 2");
    if (hidden < 1 || hidden > 16) throw ConfigError("meta loss net hidden width must be in 1..16");
    MetaLossNet n;
    n.num_classes_ = num_classes;
    n.hidden_ = hidden;
    auto init = [&rng](std::size_t r, std::size_t c, double sd) {
        Tensor t({r, c});
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sd);
        return t;
    };
    n.w1_ = init(2, hidden, 1.0 / std::sqrt(2.0));
    n.b1_ = Tensor({hidden});
    n.w2_ = init(hidden, hidden, 1.0 / std::sqrt(double(hidden)));
    n.b2_ = Tensor({hidden});
    n.w3_ = zero_final ? Tensor({hidden, 1}) : init(hidden, 1, 1.0 / std::sqrt(double(hidden)));
    n.b3_ = Tensor({1});
    if (n.param_count() > 512)
        throw ConfigError("meta loss net exceeds the 512-parameter budget");
    return n;
}

std::size_t MetaLossNet::param_count() const {
    return w1_.numel() + b1_.numel() + w2_.numel() + b2_.numel() + w3_.numel() + b3_.numel();
}

ad::Graph::NodeId MetaLossNet::build_mean_node(ad::Graph& g, ad::Graph::NodeId logits) const {
    const Tensor& hv = g.value(logits);
    if (hv.rank() != 2 || hv.cols() != num_classes_)
        throw DimensionError("meta loss: logit batch shape " + hv.shape_str() + ", expected cols " +
                             std::to_string(num_classes_));
    const std::size_t m = hv.rows(), k = num_classes_;

    // per-class features [h_k, lse(h)] stacked as an (m*k) x 1 pair of columns;
    // row-major reshape keeps (sample, class) pairs aligned
    const auto h_flat = g.reshape(logits, {m * k, 1});
    const auto lse = g.reshape(g.logsumexp_rows(logits), {m, 1});
    const auto lse_rep =
        g.reshape(g.matmul(lse, g.constant(Tensor::filled({1, k}, 1.0))), {m * k, 1});

    // first layer applied as h_flat * w1[0,:] + lse_rep * w1[1,:] + b1
    Tensor w1_row0({1, hidden_}), w1_row1({1, hidden_});
    for (std::size_t j = 0; j < hidden_; ++j) {
        w1_row0.at(0, j) = w1_.at(0, j);
        w1_row1.at(0, j) = w1_.at(1, j);
    }
    auto z1 = g.add_rowvec(g.add(g.matmul(h_flat, g.constant(w1_row0)),
                                 g.matmul(lse_rep, g.constant(w1_row1))),
                           g.constant(b1_));
    auto a1 = g.tanh(z1);
    auto a2 = g.tanh(g.add_rowvec(g.matmul(a1, g.constant(w2_)), g.constant(b2_)));
    auto out = g.add_rowvec(g.matmul(a2, g.constant(w3_)), g.constant(b3_));  // (m*k) x 1
    // sum over classes then mean over samples == sum over everything / m
    return g.scale(g.sum_all(out), 1.0 / double(m));
}

double MetaLossNet::eval(const Tensor& logits) const {
    if (logits.numel() != num_classes_)
        throw DimensionError("meta loss eval: logit vector of length " +
                             std::to_string(logits.numel()) + ", expected " +
                             std::to_string(num_classes_));
    if (!logits.all_finite()) throw NumericalError("meta loss eval: non-finite logits");
    ad::Graph g;
    const auto h = g.constant(Tensor::mat(1, num_classes_, logits.data()));
    return g.value(build_mean_node(g, h)).value();
}

std::vector<double> MetaLossNet::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const Tensor* t : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_})
        out.insert(out.end(), t->data().begin(), t->data().end());
    return out;
}

void MetaLossNet::unflatten(const std::vector<double>& params) {
    if (params.size() != param_count())
        throw DimensionError("meta loss net: parameter vector length mismatch");
    std::size_t pos = 0;
    for (Tensor* t : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}) {
        for (std::size_t i = 0; i < t->numel(); ++i) (*t)[i] = params[pos++];
    }
}

double& MetaLossNet::param(std::size_t index) {
    for (Tensor* t : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}) {
        if (index < t->numel()) return (*t)[index];
        index -= t->numel();
    }
    throw DimensionError("meta loss net: parameter index out of range");
}

std::string MetaLossNet::to_json_string() const {
    json doc;
    doc["format_version"] = 1;
    doc["architecture"] = {{"type", "meta_loss_net"},
                           {"num_classes", num_classes_},
                           {"hidden", hidden_}};
    doc["layers"] = {{{"kind", "affine"}, {"w", tensor_to_json(w1_)}, {"b", tensor_to_json(b1_)}},
                     {{"kind", "affine"}, {"w", tensor_to_json(w2_)}, {"b", tensor_to_json(b2_)}},
                     {{"kind", "affine"}, {"w", tensor_to_json(w3_)}, {"b", tensor_to_json(b3_)}}};
    return doc.dump(2);
}

MetaLossNet MetaLossNet::from_json_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("malformed meta loss net JSON: ") + e.what());
    }
    if (!doc.contains("format_version") || doc["format_version"].get<int>() != 1)
        throw IoError("unsupported meta loss net format_version");
    MetaLossNet n;
    n.num_classes_ = doc.at("architecture").at("num_classes").get<std::size_t>();
    n.hidden_ = doc.at("architecture").at("hidden").get<std::size_t>();
    const auto& layers = doc.at("layers");
    if (layers.size() != 3) throw IoError("meta loss net expects 3 affine layers");
    n.w1_ = tensor_from_json(layers[0].at("w"));
    n.b1_ = tensor_from_json(layers[0].at("b"));
    n.w2_ = tensor_from_json(layers[1].at("w"));
    n.b2_ = tensor_from_json(layers[1].at("b"));
    n.w3_ = tensor_from_json(layers[2].at("w"));
    n.b3_ = tensor_from_json(layers[2].at("b"));
    return n;
}

void MetaLossNet::save(const std::string& path) const { write_text_file(path, to_json_string()); }
MetaLossNet MetaLossNet::load(const std::string& path) {
    return from_json_string(read_text_file(path));
}

void inner_update(Model& model, const Tensor& batch, const MetaLossNet& net, double alpha,
                  const ParamMask& mask) {
    auto refs = model.adaptable_params(mask);
    ad::Graph g;
    const auto build = model.build_forward(g, batch, StatsMode::UseBatch, mask);
    const auto obj = net.build_mean_node(g, build.logits);
    if (!std::isfinite(g.value(obj).value()))
        throw DivergenceError("inner_update: non-finite meta loss");
    const auto grads = g.backward(obj);
    for (std::size_t pi = 0; pi < build.leaves.size(); ++pi) {
        const Tensor& gp = grads[build.leaves[pi].second];
        if (!gp.all_finite()) throw DivergenceError("inner_update: non-finite gradient");
        Tensor& p = *refs[pi].tensor;
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] -= alpha * gp[i];
    }
    model.replace_running_stats(build.bn_stats);
}

double outer_objective(const MetaLossNet& net, const Model& model, const ShiftPair& pair,
                       const MetaConfig& cfg) {
    Model adapted = model;
    inner_update(adapted, pair.unlabeled, net, cfg.alpha, cfg.mask);
    const Tensor logits = adapted.forward(pair.labeled_inputs, StatsMode::UseRunning);
    const Tensor targets = encode_labels(cfg.task_loss, pair.labeled_targets);
    ad::Graph g;
    const auto h = g.constant(logits);
    return g.value(cfg.task_loss.supervised_mean_node(g, h, targets)).value();
}

std::vector<double> outer_gradient(const MetaLossNet& net, const Model& model,
                                   const ShiftPair& pair, const MetaConfig& cfg) {
    if (!(cfg.fd_step > 0.0)) throw ConfigError("meta fd_step must be > 0");
    MetaLossNet probe = net;
    const std::size_t p = probe.param_count();
    std::vector<double> grad(p);
    for (std::size_t i = 0; i < p; ++i) {
        double& slot = probe.param(i);
        const double saved = slot;
        slot = saved + cfg.fd_step;
        const double up = outer_objective(probe, model, pair, cfg);
        slot = saved - cfg.fd_step;
        const double down = outer_objective(probe, model, pair, cfg);
        slot = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw DivergenceError("outer_gradient: non-finite probe at parameter " +
                                  std::to_string(i));
        grad[i] = (up - down) / (2.0 * cfg.fd_step);
    }
    return grad;
}

MetaTrainResult meta_train(MetaLossNet net, const Model& model,
                           const std::vector<ShiftPair>& pairs, const MetaConfig& cfg) {
    if (pairs.empty()) throw ConfigError("meta_train: at least one validation pair required");
    MetaTrainResult result{std::move(net), {}, true};

    auto mean_objective = [&](const MetaLossNet& n) {
        double s = 0.0;
        for (const auto& pair : pairs) s += outer_objective(n, model, pair, cfg);
        return s / double(pairs.size());
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        result.objective_trajectory.push_back(mean_objective(result.net));
        std::vector<double> grad(result.net.param_count(), 0.0);
        for (const auto& pair : pairs) {
            const auto g = outer_gradient(result.net, model, pair, cfg);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        }
        auto params = result.net.flatten();
        const double step = cfg.beta / double(pairs.size());
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
        result.net.unflatten(params);
    }
    result.objective_trajectory.push_back(mean_objective(result.net));
    result.improved =
        result.objective_trajectory.back() <= result.objective_trajectory.front();
    return result;
}

std::vector<SlicePoint> slice_export(const std::function<double(const Tensor&)>& fn,
                                     const Tensor& base, std::size_t dim, double lo, double hi,
                                     std::size_t steps) {
    if (steps < 2) throw ConfigError("slice_export: steps must be >= 2");
    if (dim >= base.numel()) throw DimensionError("slice_export: dim out of bounds");
    std::vector<SlicePoint> out;
    out.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const double x = lo + (hi - lo) * double(s) / double(steps - 1);
        Tensor h = base;
        h[dim] = x;
        out.push_back({x, fn(h)});
    }
    return out;
}

std::string slice_to_csv(const std::vector<SlicePoint>& curve) {
    std::string out = "x,loss\n";
    char buf[64];
    for (const auto& p : curve) {
        auto r1 = std::to_chars(buf, buf + sizeof(buf), p.x);
        out.append(buf, r1.ptr);
        out += ',';
        auto r2 = std::to_chars(buf, buf + sizeof(buf), p.loss);
        out.append(buf, r2.ptr);
        out += '\n';
    }
    return out;
}

std::function<double(const Tensor&)> net_slice_fn(const MetaLossNet& net) {
    return [net](const Tensor& h) { return net.eval(h); };
}

std::function<double(const Tensor&)> objective_slice_fn(Method method, const LossSpec& spec,
                                                        double temperature) {
    return [method, spec, temperature](const Tensor& h) {
        Tensor row = tta::scale(Tensor::mat(1, h.numel(), h.data()), 1.0 / temperature);
        ObjectiveExtras extras;
        if (method == Method::HardPl) extras.confidence_threshold = 0.0;
        if (method == Method::RobustPl) extras.q = 0.8;
        return tta_objective(method, spec, row, extras);
    };
}

namespace {

// least squares for y ~ alpha * e + c
void fit_affine(const std::vector<double>& e, const std::vector<double>& y, double& alpha,
                double& c, double& residual) {
    const double n = double(e.size());
    double se = 0.0, sy = 0.0, see = 0.0, sey = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        se += e[i];
        sy += y[i];
        see += e[i] * e[i];
        sey += e[i] * y[i];
    }
    const double det = n * see - se * se;
    if (std::abs(det) < 1e-14) {
        alpha = 0.0;
        c = sy / n;
    } else {
        alpha = (n * sey - se * sy) / det;
        c = (sy - alpha * se) / n;
    }
    residual = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double d = alpha * e[i] + c - y[i];
        residual += d * d;
    }
}

}  // namespace

FittedEntropyParams fit_scaled_entropy(const std::vector<SlicePoint>& curve, const Tensor& base,
                                       std::size_t dim) {
    if (curve.size() < 10) throw ConfigError("fit_scaled_entropy: need at least 10 points");
    if (dim >= base.numel()) throw DimensionError("fit_scaled_entropy: dim out of bounds");

    std::vector<double> y(curve.size());
    double ymin = curve[0].loss, ymax = curve[0].loss;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        y[i] = curve[i].loss;
        ymin = std::min(ymin, y[i]);
        ymax = std::max(ymax, y[i]);
    }
    if (ymax - ymin < 1e-15) return {0.0, 1.0, y[0], 0.0};

    auto entropy_at = [&](double t, std::size_t i) {
        Tensor h = base;
        h[dim] = curve[i].x;
        return shannon_entropy(softmax(tta::scale(h, 1.0 / t)));
    };
    auto score = [&](double t, FittedEntropyParams& fit) {
        std::vector<double> e(curve.size());
        for (std::size_t i = 0; i < curve.size(); ++i) e[i] = entropy_at(t, i);
        fit.temperature = t;
        fit_affine(e, y, fit.alpha_mag, fit.offset, fit.residual);
    };

    FittedEntropyParams best;
    best.residual = std::numeric_limits<double>::infinity();
    double t_lo = 0.1, t_hi = 10.0;
    // coarse log grid, then two linear refinement rounds around the best T
    for (int round = 0; round < 3; ++round) {
        const std::size_t points = round == 0 ? 81 : 41;
        double best_t = best.temperature;
        for (std::size_t i = 0; i < points; ++i) {
            double t;
            if (round == 0) {
                const double f = double(i) / double(points - 1);
                t = t_lo * std::pow(t_hi / t_lo, f);
            } else {
                t = t_lo + (t_hi - t_lo) * double(i) / double(points - 1);
            }
            FittedEntropyParams fit;
            score(t, fit);
            if (fit.residual < best.residual) {
                best = fit;
                best_t = t;
            }
        }
        const double width = round == 0 ? best_t * 0.6 : (t_hi - t_lo) * 0.1;
        t_lo = std::max(0.05, best_t - width);
        t_hi = best_t + width;
    }
    return best;
}

QuadraticFit fit_quadratic(const std::vector<SlicePoint>& curve) {
    if (curve.size() < 3) throw ConfigError("fit_quadratic: need at least 3 points");
    // normal equations for y ~ a x^2 + b x + c
    double s0 = double(curve.size()), s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    double t0 = 0, t1 = 0, t2 = 0;
    for (const auto& p : curve) {
        const double x = p.x, x2 = x * x;
        s1 += x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
        t0 += p.loss;
        t1 += x * p.loss;
        t2 += x2 * p.loss;
    }
    const Tensor a = Tensor::mat(3, 3, {s4, s3, s2, s3, s2, s1, s2, s1, s0});
    const Tensor rhs = Tensor::vec({t2, t1, t0});
    const Tensor sol = linalg::solve(a, rhs);
    QuadraticFit fit{sol[0], sol[1], sol[2], 0.0};
    for (const auto& p : curve) {
        const double d = fit.a * p.x * p.x + fit.b * p.x + fit.c - p.loss;
        fit.residual += d * d;
    }
    return fit;
}

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw DimensionError("pearson_correlation: length mismatch");
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace tta
