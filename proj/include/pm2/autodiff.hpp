#pragma once

#include <cstddef>
#include <deque>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "pm2/array.hpp"

namespace pm2::ad {

/// Operations recorded on the tape.
enum class Op {
    Leaf,
    MatMul,      // [m x k] * [k x n]
    Add,         // same shape, or second operand broadcast over rows
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Pow,         // elementwise integer power, exponent in attr0
    Abs,
    Log,
    Clamp,       // into [attr0, attr1]
    Affine,      // attr0 * x + attr1
    Norm2,       // L2 norm over the last axis
    Sum,         // scalar
    Mean,        // scalar
    MeanRows,    // [b x n] -> [n]
    SliceRows,   // rows [attr0, attr1)
    ConcatRows,
};

std::string_view op_name(Op op) noexcept;

/// Handle to a node in a Graph.
struct Var {
    std::size_t id = 0;
    friend bool operator==(Var, Var) = default;
};

/// Tape for one forward/backward pass. Nodes are appended in topological
/// order; a Graph is built fresh per evaluation and is not shared across
/// threads.
class Graph {
public:
    /// Leaf that receives a gradient.
    Var variable(Array value);
    /// Leaf that never receives a gradient.
    Var constant(Array value);

    /// Generic entry point used by the named helpers below. Throws
    /// std::invalid_argument naming the op and the operand shapes when they
    /// are incompatible.
    Var apply(Op op, std::span<const Var> inputs, double attr0 = 0.0, double attr1 = 0.0);

    Var matmul(Var a, Var b) { return apply2(Op::MatMul, a, b); }
    Var add(Var a, Var b) { return apply2(Op::Add, a, b); }
    Var sub(Var a, Var b) { return apply2(Op::Sub, a, b); }
    Var mul(Var a, Var b) { return apply2(Op::Mul, a, b); }
    Var relu(Var a) { return apply1(Op::Relu, a); }
    Var sigmoid(Var a) { return apply1(Op::Sigmoid, a); }
    Var pow(Var a, int exponent) { return apply1(Op::Pow, a, exponent); }
    Var abs(Var a) { return apply1(Op::Abs, a); }
    Var log(Var a) { return apply1(Op::Log, a); }
    Var clamp(Var a, double lo, double hi) { return apply1(Op::Clamp, a, lo, hi); }
    Var affine(Var a, double scale, double shift) { return apply1(Op::Affine, a, scale, shift); }
    Var scale(Var a, double s) { return affine(a, s, 0.0); }
    Var norm2(Var a) { return apply1(Op::Norm2, a); }
    Var sum(Var a) { return apply1(Op::Sum, a); }
    Var mean(Var a) { return apply1(Op::Mean, a); }
    Var mean_rows(Var a) { return apply1(Op::MeanRows, a); }
    Var slice_rows(Var a, std::size_t begin, std::size_t end) {
        return apply1(Op::SliceRows, a, static_cast<double>(begin), static_cast<double>(end));
    }
    Var concat_rows(Var a, Var b) { return apply2(Op::ConcatRows, a, b); }

    /// References stay valid for the lifetime of the graph.
    const Array& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient of the last backward root with respect to v. Zero-filled for
    /// nodes that do not influence the root.
    const Array& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    Op op(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse sweep from a scalar root. Gradients accumulate across every
    /// path from a node to the root.
    void backward(Var root);

private:
    struct Node {
        Op op = Op::Leaf;
        std::vector<std::size_t> inputs;
        double attr0 = 0.0;
        double attr1 = 0.0;
        bool requires_grad = false;
        Array value;
        Array grad;
    };

    Var apply1(Op op, Var a, double x = 0.0, double y = 0.0) {
        const Var in[1] = {a};
        return apply(op, in, x, y);
    }
    Var apply2(Op op, Var a, Var b) {
        const Var in[2] = {a, b};
        return apply(op, in);
    }
    Var push(Node node);
    void backprop_node(const Node& node);

    // deque: appending never moves existing nodes.
    std::deque<Node> nodes_;
    bool has_grads_ = false;
};

}  // namespace pm2::ad
