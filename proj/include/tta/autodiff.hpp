// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode autodiff over dense tensors. Nodes are appended in
// construction order, which is therefore a topological order; backward walks
// it once in reverse. Leaves receive gradients, constants do not.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tta/tensor.hpp"

namespace tta::ad {

enum class Op : std::uint8_t {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Reshape,
    Relu,
    Exp,
    Log,
    Tanh,
    PowConst,
    SumAll,
    SumRows,
    LogSumExpRows,
    SoftmaxRows,
    BatchNormCols,
    AddRowVec,
    MulRowVec,
    PolyPseudoLabelRows,
};

class Graph {
public:
    using NodeId = std::int32_t;

    struct Node {
        Op op;
        NodeId in0 = -1;
        NodeId in1 = -1;
        double aux = 0.0;
        Tensor value;
    };

    NodeId leaf(Tensor v);
    NodeId constant(Tensor v);
    NodeId constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId matmul(NodeId a, NodeId b);
    NodeId reshape(NodeId a, std::vector<std::size_t> shape);
    NodeId relu(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId tanh(NodeId a);
    NodeId pow_const(NodeId a, double p);
    NodeId sum_all(NodeId a);                  // -> scalar
    NodeId mean_all(NodeId a);                 // sum_all / numel
    NodeId sum_rows(NodeId a);                 // [m x n] -> [m]
    NodeId logsumexp_rows(NodeId a);           // [m x n] -> [m]
    NodeId softmax_rows(NodeId a);             // [m x n] -> [m x n]
    NodeId batchnorm_cols(NodeId a, double eps);  // per-column batch normalization
    NodeId add_rowvec(NodeId m, NodeId v);     // broadcast add of [n] over rows of [m x n]
    NodeId mul_rowvec(NodeId m, NodeId v);
    // Per-row conjugate pseudo-label of the polynomially-coupled loss: solves
    // (I + eps*diag(z) - eps*z z^T) y = z with z = softmax(row). The backward
    // pass differentiates through the solve.
    NodeId poly_pseudolabel_rows(NodeId a, double eps);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }
    bool is_leaf(NodeId id) const { return nodes_[id].op == Op::Leaf; }

    // Gradients of a scalar output w.r.t. every node, indexed by node id.
    // Leaves not reached by the backward sweep get zero tensors; unreachable
    // non-leaf entries stay empty. Throws ContractError for non-scalar output.
    std::vector<Tensor> backward(NodeId output) const;

private:
    NodeId push(Op op, NodeId in0, NodeId in1, double aux, Tensor value);
    std::vector<Node> nodes_;
};

// Compares the reverse-mode gradient of `fn` (a graph-building scalar function
// of one vector leaf) at `point` against central finite differences with the
// given step. Returns the maximum relative error over coordinates, with
// denominator max(|analytic|, |numeric|, 1e-8). Non-finite evaluation throws
// NumericalError.
using ScalarFn = std::function<Graph::NodeId(Graph&, Graph::NodeId)>;
double grad_check(const ScalarFn& fn, const Tensor& point, double step);

}  // namespace tta::ad
