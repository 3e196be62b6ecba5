#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "cat/tensor.hpp"

// Explicit-tape reverse-mode autodiff over Tensor. Nodes are appended in
// forward order; backward() walks the tape from the (scalar) root down,
// calling each node's hand-written vector-Jacobian product, which accumulates
// into the parents' cotangent buffers. Every VJP is finite-difference-checked
// in tests/test_autograd.cpp.

namespace cat {

using NodeId = std::size_t;

class Tape;

// Accumulates this node's contribution into its parents' cotangents
// (via Tape::cot_accum). Receives the node's own accumulated cotangent.
using BackwardFn = std::function<void(Tape&, const Tensor& cot)>;

class Tape {
public:
    // Input node. requires_grad marks it as a differentiation target.
    NodeId leaf(Tensor value, bool requires_grad = true);

    // Interior node; requires_grad is inherited (OR over parents) unless
    // force_no_grad cuts the flow (used by the mu==0 gradient-reversal node).
    NodeId push(Tensor value, std::vector<NodeId> parents, BackwardFn bwd,
                bool force_no_grad = false);

    const Tensor& value(NodeId id) const;
    bool requires_grad(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar root; seeds d(root)/d(root) = 1.
    void backward(NodeId root);

    // Accumulated cotangent of any node after backward(). Nodes the sweep
    // never reached hold exact zeros.
    const Tensor& gradient(NodeId id) const;

    // For BackwardFns: the parent's cotangent accumulator.
    Tensor& cot_accum(NodeId id);

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> parents;
        BackwardFn bwd;
        bool requires_grad;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> cots_;
    std::vector<char> visited_;
    bool ran_backward_ = false;
};

namespace ops {

// y = x·W + b, x:[batch×in] W:[in×out] b:[out]
NodeId affine(Tape& t, NodeId x, NodeId w, NodeId b);
// elementwise max(0,x); subgradient at 0 is 0
NodeId relu(Tape& t, NodeId x);
NodeId tanh(Tape& t, NodeId x);
// sigmoid with output clamped to [eps, 1-eps]; derivative 0 where clamped
NodeId sigmoid_clamped(Tape& t, NodeId x, double eps);
// gradient reversal: identity forward, cotangent scaled by -mu backward.
// mu == 0 cuts gradient flow entirely (no -0.0 artifacts); mu < 0 → ConfigError.
NodeId grl(Tape& t, NodeId x, double mu);
// stack rows: [A; B]
NodeId concat_rows(Tape& t, NodeId a, NodeId b);
// each row scaled to unit l2 norm; zero-norm row → DegenerateInputError
NodeId row_normalize(Tape& t, NodeId x);
// scalar Σ w_i·v_i over scalar nodes; callers omit zero-weight terms when
// bitwise neutrality matters
NodeId weighted_sum(Tape& t, const std::vector<std::pair<NodeId, double>>& terms);

}  // namespace ops

// --- plain (non-tape) numerics ---

// row-wise softmax with max-subtraction, [batch×C]
Tensor softmax(const Tensor& logits);
// a·b / (||a||·||b||); zero norm → DegenerateInputError
double cosine_similarity(const Tensor& a, const Tensor& b);
// identity (bitwise copy)
Tensor grl_forward(const Tensor& x);
// -mu · cotangent; mu == 0 → exact zero tensor; mu < 0 → ConfigError
Tensor grl_backward(const Tensor& cotangent, double mu);

}  // namespace cat
