#include "pm2/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pm2::ad {

namespace {

[[noreturn]] void shape_error(Op op, std::span<const Array* const> shapes, const std::string& why) {
    std::string msg = "autodiff: ";
    msg += op_name(op);
    msg += " rejects operand shapes";
    for (const Array* a : shapes) msg += " " + shape_string(a->shape);
    msg += ": " + why;
    throw std::invalid_argument(msg);
}

enum class Broadcast { Same, Rows };

Broadcast broadcast_kind(Op op, const Array& a, const Array& b) {
    if (a.shape == b.shape) return Broadcast::Same;
    const bool row_vector = (b.rank() == 1 && b.shape[0] == a.cols()) ||
                            (b.rank() == 2 && b.shape[0] == 1 && b.shape[1] == a.cols());
    if (a.rank() == 2 && row_vector) return Broadcast::Rows;
    const Array* shapes[2] = {&a, &b};
    shape_error(op, shapes, "expected equal shapes or a row vector matching the last axis");
}

template <typename F>
Array binary_map(const Array& a, const Array& b, Broadcast kind, F f) {
    Array out(a.shape);
    if (kind == Broadcast::Same) {
        for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    } else {
        const std::size_t n = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
            for (std::size_t c = 0; c < n; ++c) out.data[r * n + c] = f(a.data[r * n + c], b.data[c]);
        }
    }
    return out;
}

template <typename F>
Array unary_map(const Array& a, F f) {
    Array out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
    return out;
}

double int_pow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

// Accumulates a gradient computed in the broadcast layout back into the
// operand shape.
void accumulate_broadcast(Array& target, const Array& g, Broadcast kind) {
    if (kind == Broadcast::Same) {
        for (std::size_t i = 0; i < g.size(); ++i) target.data[i] += g.data[i];
        return;
    }
    const std::size_t n = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) target.data[c] += g.data[r * n + c];
    }
}

}  // namespace

std::string_view op_name(Op op) noexcept {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Pow: return "pow";
        case Op::Abs: return "abs";
        case Op::Log: return "log";
        case Op::Clamp: return "clamp";
        case Op::Affine: return "affine";
        case Op::Norm2: return "norm2";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::MeanRows: return "mean_rows";
        case Op::SliceRows: return "slice_rows";
        case Op::ConcatRows: return "concat_rows";
    }
    return "unknown";
}

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    has_grads_ = false;
    return Var{nodes_.size() - 1};
}

Var Graph::variable(Array value) {
    Node n;
    n.requires_grad = true;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::constant(Array value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::apply(Op op, std::span<const Var> inputs, double attr0, double attr1) {
    const std::size_t arity = (op == Op::MatMul || op == Op::Add || op == Op::Sub || op == Op::Mul ||
                               op == Op::ConcatRows)
                                  ? 2
                                  : 1;
    if (op == Op::Leaf) throw std::invalid_argument("autodiff: leaf nodes are created with variable/constant");
    if (inputs.size() != arity) {
        throw std::invalid_argument("autodiff: " + std::string(op_name(op)) + " expects " +
                                    std::to_string(arity) + " inputs, got " + std::to_string(inputs.size()));
    }
    for (Var v : inputs) {
        if (v.id >= nodes_.size()) throw std::invalid_argument("autodiff: unknown node id " + std::to_string(v.id));
    }

    Node node;
    node.op = op;
    node.attr0 = attr0;
    node.attr1 = attr1;
    for (Var v : inputs) {
        node.inputs.push_back(v.id);
        node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }

    const Array& a = nodes_[inputs[0].id].value;
    const Array* b = arity == 2 ? &nodes_[inputs[1].id].value : nullptr;
    const Array* both[2] = {&a, b};
    const std::span<const Array* const> shapes(both, arity);

    switch (op) {
        case Op::MatMul: {
            if (a.rank() != 2 || b->rank() != 2 || a.shape[1] != b->shape[0]) {
                shape_error(op, shapes, "inner dimensions must agree on rank-2 operands");
            }
            const std::size_t m = a.shape[0], k = a.shape[1], n = b->shape[1];
            Array out = Array::matrix(m, n);
            for (std::size_t i = 0; i < m; ++i) {
                double* row = &out.data[i * n];
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = a.data[i * k + p];
                    const double* brow = &b->data[p * n];
                    for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
                }
            }
            node.value = std::move(out);
            break;
        }
        case Op::Add:
            node.value = binary_map(a, *b, broadcast_kind(op, a, *b), [](double x, double y) { return x + y; });
            break;
        case Op::Sub:
            node.value = binary_map(a, *b, broadcast_kind(op, a, *b), [](double x, double y) { return x - y; });
            break;
        case Op::Mul:
            node.value = binary_map(a, *b, broadcast_kind(op, a, *b), [](double x, double y) { return x * y; });
            break;
        case Op::Relu:
            node.value = unary_map(a, [](double x) { return x > 0.0 ? x : 0.0; });
            break;
        case Op::Sigmoid:
            node.value = unary_map(a, [](double x) {
                if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                const double e = std::exp(x);
                return e / (1.0 + e);
            });
            break;
        case Op::Pow: {
            const int k = static_cast<int>(attr0);
            if (k < 0 || static_cast<double>(k) != attr0) {
                shape_error(op, shapes, "exponent must be a nonnegative integer");
            }
            node.value = unary_map(a, [k](double x) { return int_pow(x, k); });
            break;
        }
        case Op::Abs:
            node.value = unary_map(a, [](double x) { return std::fabs(x); });
            break;
        case Op::Log:
            node.value = unary_map(a, [](double x) { return std::log(x); });
            break;
        case Op::Clamp:
            if (!(attr0 <= attr1)) shape_error(op, shapes, "clamp bounds out of order");
            node.value = unary_map(a, [lo = attr0, hi = attr1](double x) { return x < lo ? lo : (x > hi ? hi : x); });
            break;
        case Op::Affine:
            node.value = unary_map(a, [s = attr0, t = attr1](double x) { return s * x + t; });
            break;
        case Op::Norm2: {
            if (a.rank() == 0) shape_error(op, shapes, "needs at least one axis");
            const std::size_t n = a.cols();
            const std::size_t r = a.size() / n;
            std::vector<std::size_t> out_shape(a.shape.begin(), a.shape.end() - 1);
            Array out(out_shape);
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t c = 0; c < n; ++c) acc += a.data[i * n + c] * a.data[i * n + c];
                out.data[i] = std::sqrt(acc);
            }
            node.value = std::move(out);
            break;
        }
        case Op::Sum:
        case Op::Mean: {
            if (a.size() == 0) shape_error(op, shapes, "empty operand");
            double acc = 0.0;
            for (double x : a.data) acc += x;
            if (op == Op::Mean) acc /= static_cast<double>(a.size());
            node.value = Array::scalar(acc);
            break;
        }
        case Op::MeanRows: {
            if (a.rank() != 2 || a.shape[0] == 0) shape_error(op, shapes, "expects a nonempty rank-2 operand");
            const std::size_t m = a.shape[0], n = a.shape[1];
            Array out({n});
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t c = 0; c < n; ++c) out.data[c] += a.data[i * n + c];
            }
            for (double& x : out.data) x /= static_cast<double>(m);
            node.value = std::move(out);
            break;
        }
        case Op::SliceRows: {
            const auto begin = static_cast<std::size_t>(attr0);
            const auto end = static_cast<std::size_t>(attr1);
            if (a.rank() != 2 || begin > end || end > a.shape[0]) {
                shape_error(op, shapes, "row range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid");
            }
            const std::size_t n = a.shape[1];
            Array out = Array::matrix(end - begin, n);
            std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                      a.data.begin() + static_cast<std::ptrdiff_t>(end * n), out.data.begin());
            node.value = std::move(out);
            break;
        }
        case Op::ConcatRows: {
            if (a.rank() != 2 || b->rank() != 2 || a.shape[1] != b->shape[1]) {
                shape_error(op, shapes, "column counts must agree on rank-2 operands");
            }
            Array out = Array::matrix(a.shape[0] + b->shape[0], a.shape[1]);
            std::copy(a.data.begin(), a.data.end(), out.data.begin());
            std::copy(b->data.begin(), b->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
            node.value = std::move(out);
            break;
        }
        case Op::Leaf:
            break;
    }
    return push(std::move(node));
}

const Array& Graph::grad(Var v) const {
    if (!has_grads_) throw std::logic_error("autodiff: grad requested before backward");
    return nodes_.at(v.id).grad;
}

void Graph::backward(Var root) {
    if (root.id >= nodes_.size()) throw std::invalid_argument("autodiff: unknown root id");
    if (!nodes_[root.id].value.is_scalar()) {
        throw std::invalid_argument("autodiff: backward root must be scalar, got shape " +
                                    shape_string(nodes_[root.id].value.shape));
    }
    for (Node& n : nodes_) n.grad = Array(n.value.shape);
    nodes_[root.id].grad.data[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.op == Op::Leaf || !n.requires_grad) continue;
        backprop_node(n);
    }
    has_grads_ = true;
}

void Graph::backprop_node(const Node& node) {
    const Array& g = node.grad;
    Node& in0 = nodes_[node.inputs[0]];
    const Array& a = in0.value;
    const bool want0 = in0.requires_grad;

    switch (node.op) {
        case Op::MatMul: {
            Node& in1 = nodes_[node.inputs[1]];
            const Array& b = in1.value;
            const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
            if (want0) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += g.data[i * n + j] * b.data[p * n + j];
                        in0.grad.data[i * k + p] += acc;
                    }
                }
            }
            if (in1.requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = a.data[i * k + p];
                        double* grow = &in1.grad.data[p * n];
                        for (std::size_t j = 0; j < n; ++j) grow[j] += av * g.data[i * n + j];
                    }
                }
            }
            break;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Mul: {
            Node& in1 = nodes_[node.inputs[1]];
            const Array& b = in1.value;
            const Broadcast kind = a.shape == b.shape ? Broadcast::Same : Broadcast::Rows;
            if (node.op == Op::Mul) {
                if (want0) {
                    Array ga = binary_map(g, b, kind, [](double x, double y) { return x * y; });
                    accumulate_broadcast(in0.grad, ga, Broadcast::Same);
                }
                if (in1.requires_grad) {
                    Array gb = binary_map(g, a, Broadcast::Same, [](double x, double y) { return x * y; });
                    accumulate_broadcast(in1.grad, gb, kind);
                }
            } else {
                if (want0) accumulate_broadcast(in0.grad, g, Broadcast::Same);
                if (in1.requires_grad) {
                    if (node.op == Op::Add) {
                        accumulate_broadcast(in1.grad, g, kind);
                    } else {
                        accumulate_broadcast(in1.grad, unary_map(g, [](double x) { return -x; }), kind);
                    }
                }
            }
            break;
        }
        case Op::ConcatRows: {
            Node& in1 = nodes_[node.inputs[1]];
            const std::size_t split = a.size();
            if (want0) {
                for (std::size_t i = 0; i < split; ++i) in0.grad.data[i] += g.data[i];
            }
            if (in1.requires_grad) {
                for (std::size_t i = 0; i < in1.value.size(); ++i) in1.grad.data[i] += g.data[split + i];
            }
            break;
        }
        default:
            break;
    }
    if (!want0 || node.inputs.size() != 1) return;

    Array& ga = in0.grad;
    const Array& out = node.value;
    switch (node.op) {
        case Op::Relu:
            for (std::size_t i = 0; i < a.size(); ++i) ga.data[i] += a.data[i] > 0.0 ? g.data[i] : 0.0;
            break;
        case Op::Sigmoid:
            for (std::size_t i = 0; i < a.size(); ++i) ga.data[i] += g.data[i] * out.data[i] * (1.0 - out.data[i]);
            break;
        case Op::Pow: {
            const int k = static_cast<int>(node.attr0);
            if (k == 0) break;
            for (std::size_t i = 0; i < a.size(); ++i) ga.data[i] += g.data[i] * k * int_pow(a.data[i], k - 1);
            break;
        }
        case Op::Abs:
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double s = a.data[i] > 0.0 ? 1.0 : (a.data[i] < 0.0 ? -1.0 : 0.0);
                ga.data[i] += g.data[i] * s;
            }
            break;
        case Op::Log:
            for (std::size_t i = 0; i < a.size(); ++i) ga.data[i] += g.data[i] / a.data[i];
            break;
        case Op::Clamp:
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (a.data[i] >= node.attr0 && a.data[i] <= node.attr1) ga.data[i] += g.data[i];
            }
            break;
        case Op::Affine:
            for (std::size_t i = 0; i < a.size(); ++i) ga.data[i] += node.attr0 * g.data[i];
            break;
        case Op::Norm2: {
            const std::size_t n = a.cols();
            for (std::size_t r = 0; r < out.size(); ++r) {
                if (out.data[r] == 0.0) continue;
                const double s = g.data[r] / out.data[r];
                for (std::size_t c = 0; c < n; ++c) ga.data[r * n + c] += s * a.data[r * n + c];
            }
            break;
        }
        case Op::Sum:
            for (double& x : ga.data) x += g.data[0];
            break;
        case Op::Mean: {
            const double s = g.data[0] / static_cast<double>(a.size());
            for (double& x : ga.data) x += s;
            break;
        }
        case Op::MeanRows: {
            const std::size_t m = a.shape[0], n = a.shape[1];
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t c = 0; c < n; ++c) ga.data[i * n + c] += g.data[c] * inv;
            }
            break;
        }
        case Op::SliceRows: {
            const std::size_t offset = static_cast<std::size_t>(node.attr0) * a.shape[1];
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[offset + i] += g.data[i];
            break;
        }
        default:
            break;
    }
}

}  // namespace pm2::ad
