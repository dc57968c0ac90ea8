// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#include "tta/autodiff.hpp"

#include <cmath>
#include <string>

#include "tta/errors.hpp"
#include "tta/linalg.hpp"

namespace tta::ad {

Graph::NodeId Graph::push(Op op, NodeId in0, NodeId in1, double aux, Tensor value) {
    nodes_.push_back(Node{op, in0, in1, aux, std::move(value)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::leaf(Tensor v) { return push(Op::Leaf, -1, -1, 0.0, std::move(v)); }
Graph::NodeId Graph::constant(Tensor v) { return push(Op::Constant, -1, -1, 0.0, std::move(v)); }

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    return push(Op::Add, a, b, 0.0, tta::add(value(a), value(b)));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    return push(Op::Sub, a, b, 0.0, tta::sub(value(a), value(b)));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    return push(Op::Mul, a, b, 0.0, tta::mul(value(a), value(b)));
}

Graph::NodeId Graph::scale(NodeId a, double c) {
    return push(Op::Scale, a, -1, c, tta::scale(value(a), c));
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    return push(Op::MatMul, a, b, 0.0, tta::matmul(value(a), value(b)));
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
    Tensor out(std::move(shape), value(a).data());
    return push(Op::Reshape, a, -1, 0.0, std::move(out));
}

Graph::NodeId Graph::relu(NodeId a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return push(Op::Relu, a, -1, 0.0, std::move(out));
}

Graph::NodeId Graph::exp(NodeId a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return push(Op::Exp, a, -1, 0.0, std::move(out));
}

Graph::NodeId Graph::log(NodeId a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return push(Op::Log, a, -1, 0.0, std::move(out));
}

Graph::NodeId Graph::tanh(NodeId a) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    return push(Op::Tanh, a, -1, 0.0, std::move(out));
}

Graph::NodeId Graph::pow_const(NodeId a, double p) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::pow(out[i], p);
    return push(Op::PowConst, a, -1, p, std::move(out));
}

Graph::NodeId Graph::sum_all(NodeId a) {
    return push(Op::SumAll, a, -1, 0.0, Tensor::scalar(tta::sum(value(a))));
}

Graph::NodeId Graph::mean_all(NodeId a) {
    const std::size_t n = value(a).numel();
    if (n == 0) throw DimensionError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Graph::NodeId Graph::sum_rows(NodeId a) {
    const Tensor& x = value(a);
    if (x.rank() != 2) throw DimensionError("sum_rows: rank-2 required, got " + x.shape_str());
    Tensor out({x.rows()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j);
        out[i] = s;
    }
    return push(Op::SumRows, a, -1, 0.0, std::move(out));
}

Graph::NodeId Graph::logsumexp_rows(NodeId a) {
    return push(Op::LogSumExpRows, a, -1, 0.0, tta::logsumexp_rows(value(a)));
}

Graph::NodeId Graph::softmax_rows(NodeId a) {
    return push(Op::SoftmaxRows, a, -1, 0.0, tta::softmax_rows(value(a)));
}

Graph::NodeId Graph::batchnorm_cols(NodeId a, double eps) {
    const Tensor& x = value(a);
    if (x.rank() != 2) throw DimensionError("batchnorm_cols: rank-2 required");
    if (x.rows() < 2)
        throw ContractError("batchnorm_cols: batch statistics require batch size >= 2");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({m, n});
    for (std::size_t j = 0; j < n; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) mu += x.at(i, j);
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < m; ++i) out.at(i, j) = (x.at(i, j) - mu) * inv;
    }
    return push(Op::BatchNormCols, a, -1, eps, std::move(out));
}

Graph::NodeId Graph::add_rowvec(NodeId m, NodeId v) {
    const Tensor& x = value(m);
    const Tensor& w = value(v);
    if (x.rank() != 2 || w.numel() != x.cols())
        throw DimensionError("add_rowvec: shapes " + x.shape_str() + " and " + w.shape_str());
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) += w[j];
    return push(Op::AddRowVec, m, v, 0.0, std::move(out));
}

Graph::NodeId Graph::mul_rowvec(NodeId m, NodeId v) {
    const Tensor& x = value(m);
    const Tensor& w = value(v);
    if (x.rank() != 2 || w.numel() != x.cols())
        throw DimensionError("mul_rowvec: shapes " + x.shape_str() + " and " + w.shape_str());
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) *= w[j];
    return push(Op::MulRowVec, m, v, 0.0, std::move(out));
}

Graph::NodeId Graph::poly_pseudolabel_rows(NodeId a, double eps) {
    const Tensor& x = value(a);
    if (x.rank() != 2) throw DimensionError("poly_pseudolabel_rows: rank-2 required");
    const std::size_t m = x.rows(), k = x.cols();
    Tensor out({m, k});
    Tensor mat({k, k});
    Tensor z({k});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            z[j] = std::exp(x.at(i, j) - mx);
            s += z[j];
        }
        for (std::size_t j = 0; j < k; ++j) z[j] /= s;
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c)
                mat.at(r, c) = (r == c ? 1.0 + eps * z[r] : 0.0) - eps * z[r] * z[c];
        Tensor y = linalg::solve(mat, z);
        for (std::size_t j = 0; j < k; ++j) out.at(i, j) = y[j];
    }
    return push(Op::PolyPseudoLabelRows, a, -1, eps, std::move(out));
}

namespace {

void ensure_grad(Tensor& g, const Tensor& like) {
    if (g.empty()) g = Tensor::zeros_like(like);
}

}  // namespace

std::vector<Tensor> Graph::backward(NodeId output) const {
    if (output < 0 || static_cast<std::size_t>(output) >= nodes_.size())
        throw ContractError("backward: invalid output node");
    if (nodes_[output].value.numel() != 1)
        throw ContractError("backward: output must be scalar, got " +
                            nodes_[output].value.shape_str());

    std::vector<Tensor> grad(nodes_.size());
    grad[output] = Tensor::filled(nodes_[output].value.shape(), 1.0);

    for (NodeId id = output; id >= 0; --id) {
        if (grad[id].empty()) continue;
        const Node& nd = nodes_[id];
        const Tensor& g = grad[id];
        switch (nd.op) {
            case Op::Leaf:
            case Op::Constant:
                break;
            case Op::Add: {
                ensure_grad(grad[nd.in0], nodes_[nd.in0].value);
                ensure_grad(grad[nd.in1], nodes_[nd.in1].value);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    grad[nd.in0][i] += g[i];
                    grad[nd.in1][i] += g[i];
                }
                break;
            }
            case Op::Sub: {
                ensure_grad(grad[nd.in0], nodes_[nd.in0].value);
                ensure_grad(grad[nd.in1], nodes_[nd.in1].value);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    grad[nd.in0][i] += g[i];
                    grad[nd.in1][i] -= g[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& a = nodes_[nd.in0].value;
                const Tensor& b = nodes_[nd.in1].value;
                ensure_grad(grad[nd.in0], a);
                ensure_grad(grad[nd.in1], b);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    grad[nd.in0][i] += g[i] * b[i];
                    grad[nd.in1][i] += g[i] * a[i];
                }
                break;
            }
            case Op::Scale: {
                ensure_grad(grad[nd.in0], nodes_[nd.in0].value);
                for (std::size_t i = 0; i < g.numel(); ++i) grad[nd.in0][i] += nd.aux * g[i];
                break;
            }
            case Op::MatMul: {
                const Tensor& a = nodes_[nd.in0].value;
                const Tensor& b = nodes_[nd.in1].value;
                ensure_grad(grad[nd.in0], a);
                ensure_grad(grad[nd.in1], b);
                const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
                Tensor& ga = grad[nd.in0];
                Tensor& gb = grad[nd.in1];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (std::size_t l = 0; l < kk; ++l) {
                            ga.at(i, l) += gij * b.at(l, j);
                            gb.at(l, j) += gij * a.at(i, l);
                        }
                    }
                break;
            }
            case Op::Reshape: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                for (std::size_t i = 0; i < g.numel(); ++i) grad[nd.in0][i] += g[i];
                break;
            }
            case Op::Relu: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (a[i] > 0.0) grad[nd.in0][i] += g[i];
                break;
            }
            case Op::Exp: {
                ensure_grad(grad[nd.in0], nodes_[nd.in0].value);
                for (std::size_t i = 0; i < g.numel(); ++i) grad[nd.in0][i] += g[i] * nd.value[i];
                break;
            }
            case Op::Log: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                for (std::size_t i = 0; i < g.numel(); ++i) grad[nd.in0][i] += g[i] / a[i];
                break;
            }
            case Op::Tanh: {
                ensure_grad(grad[nd.in0], nodes_[nd.in0].value);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    grad[nd.in0][i] += g[i] * (1.0 - nd.value[i] * nd.value[i]);
                break;
            }
            case Op::PowConst: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    grad[nd.in0][i] += g[i] * nd.aux * std::pow(a[i], nd.aux - 1.0);
                break;
            }
            case Op::SumAll: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                const double gv = g[0];
                for (std::size_t i = 0; i < a.numel(); ++i) grad[nd.in0][i] += gv;
                break;
            }
            case Op::SumRows: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                Tensor& ga = grad[nd.in0];
                for (std::size_t i = 0; i < a.rows(); ++i)
                    for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) += g[i];
                break;
            }
            case Op::LogSumExpRows: {
                const Tensor& a = nodes_[nd.in0].value;
                ensure_grad(grad[nd.in0], a);
                Tensor& ga = grad[nd.in0];
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    for (std::size_t j = 0; j < a.cols(); ++j)
                        ga.at(i, j) += gi * std::exp(a.at(i, j) - nd.value[i]);
                }
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& s = nd.value;
                ensure_grad(grad[nd.in0], s);
                Tensor& ga = grad[nd.in0];
                for (std::size_t i = 0; i < s.rows(); ++i) {
                    double d = 0.0;
                    for (std::size_t j = 0; j < s.cols(); ++j) d += g.at(i, j) * s.at(i, j);
                    for (std::size_t j = 0; j < s.cols(); ++j)
                        ga.at(i, j) += s.at(i, j) * (g.at(i, j) - d);
                }
                break;
            }
            case Op::BatchNormCols: {
                const Tensor& x = nodes_[nd.in0].value;
                const Tensor& y = nd.value;  // normalized values
                ensure_grad(grad[nd.in0], x);
                Tensor& ga = grad[nd.in0];
                const std::size_t m = x.rows(), n = x.cols();
                const double inv_m = 1.0 / static_cast<double>(m);
                for (std::size_t j = 0; j < n; ++j) {
                    double mu = 0.0;
                    for (std::size_t i = 0; i < m; ++i) mu += x.at(i, j);
                    mu *= inv_m;
                    double var = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        const double d = x.at(i, j) - mu;
                        var += d * d;
                    }
                    var *= inv_m;
                    const double inv_sd = 1.0 / std::sqrt(var + nd.aux);
                    double g_mean = 0.0, gy_mean = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        g_mean += g.at(i, j);
                        gy_mean += g.at(i, j) * y.at(i, j);
                    }
                    g_mean *= inv_m;
                    gy_mean *= inv_m;
                    for (std::size_t i = 0; i < m; ++i)
                        ga.at(i, j) += inv_sd * (g.at(i, j) - g_mean - y.at(i, j) * gy_mean);
                }
                break;
            }
            case Op::AddRowVec: {
                const Tensor& x = nodes_[nd.in0].value;
                const Tensor& w = nodes_[nd.in1].value;
                ensure_grad(grad[nd.in0], x);
                ensure_grad(grad[nd.in1], w);
                Tensor& gx = grad[nd.in0];
                Tensor& gw = grad[nd.in1];
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) {
                        gx.at(i, j) += g.at(i, j);
                        gw[j] += g.at(i, j);
                    }
                break;
            }
            case Op::MulRowVec: {
                const Tensor& x = nodes_[nd.in0].value;
                const Tensor& w = nodes_[nd.in1].value;
                ensure_grad(grad[nd.in0], x);
                ensure_grad(grad[nd.in1], w);
                Tensor& gx = grad[nd.in0];
                Tensor& gw = grad[nd.in1];
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) {
                        gx.at(i, j) += g.at(i, j) * w[j];
                        gw[j] += g.at(i, j) * x.at(i, j);
                    }
                break;
            }
            case Op::PolyPseudoLabelRows: {
                const Tensor& x = nodes_[nd.in0].value;
                const Tensor& yv = nd.value;
                const double eps = nd.aux;
                ensure_grad(grad[nd.in0], x);
                Tensor& ga = grad[nd.in0];
                const std::size_t m = x.rows(), k = x.cols();
                Tensor z({k}), y({k}), gout({k}), mat({k, k});
                for (std::size_t i = 0; i < m; ++i) {
                    double mx = x.at(i, 0);
                    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(i, j));
                    double s = 0.0;
                    for (std::size_t j = 0; j < k; ++j) {
                        z[j] = std::exp(x.at(i, j) - mx);
                        s += z[j];
                    }
                    for (std::size_t j = 0; j < k; ++j) z[j] /= s;
                    for (std::size_t j = 0; j < k; ++j) {
                        y[j] = yv.at(i, j);
                        gout[j] = g.at(i, j);
                    }
                    for (std::size_t r = 0; r < k; ++r)
                        for (std::size_t c = 0; c < k; ++c)
                            mat.at(r, c) = (r == c ? 1.0 + eps * z[r] : 0.0) - eps * z[r] * z[c];
                    // adjoint of the solve: lambda = M^-1 g (M symmetric), then
                    // the matrix-dependence terms of M(z) = I + eps*diag(z) - eps*z z^T
                    Tensor lambda = linalg::solve(mat, gout);
                    const double yz = dot(y, z);
                    const double lz = dot(lambda, z);
                    Tensor gz({k});
                    for (std::size_t j = 0; j < k; ++j)
                        gz[j] = lambda[j] - eps * lambda[j] * y[j] + eps * yz * lambda[j] +
                                eps * lz * y[j];
                    double zg = dot(z, gz);
                    for (std::size_t j = 0; j < k; ++j) ga.at(i, j) += z[j] * (gz[j] - zg);
                }
                break;
            }
        }
    }

    for (NodeId id = 0; static_cast<std::size_t>(id) < nodes_.size(); ++id)
        if (nodes_[id].op == Op::Leaf && grad[id].empty())
            grad[id] = Tensor::zeros_like(nodes_[id].value);
    return grad;
}

double grad_check(const ScalarFn& fn, const Tensor& point, double step) {
    if (step <= 0.0) throw ConfigError("grad_check: step must be positive");

    Graph g;
    const Graph::NodeId x = g.leaf(point);
    const Graph::NodeId out = fn(g, x);
    if (g.value(out).numel() != 1) throw ContractError("grad_check: fn must return a scalar");
    if (!std::isfinite(g.value(out).value()))
        throw NumericalError("grad_check: non-finite evaluation at base point");
    const Tensor analytic = g.backward(out)[x];

    auto eval = [&fn](const Tensor& p) {
        Graph gg;
        const Graph::NodeId xx = gg.leaf(p);
        const double v = gg.value(fn(gg, xx)).value();
        if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite evaluation");
        return v;
    };

    double max_rel = 0.0;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        Tensor hi = point, lo = point;
        hi[i] += step;
        lo[i] -= step;
        const double numeric = (eval(hi) - eval(lo)) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

}  // namespace tta::ad
