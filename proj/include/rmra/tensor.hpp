#pragma once

// Dense row-major tensors with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle onto a node holding values, an optional
// gradient, and (for op results) the backward closure plus its inputs. The
// graph is retained after backward(); calling zero_grad() on the leaves and
// running backward() again reproduces the same gradients.

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rmra/error.hpp"

namespace rmra {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

inline Index shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename Scalar>
struct Node {
    using Ptr = std::shared_ptr<Node>;
    using BackwardFn = std::function<void(const Array<Scalar>& out_grad, std::span<const Ptr> inputs)>;

    Shape shape;
    Array<Scalar> data;
    Array<Scalar> grad;  // size 0 means absent
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Ptr> inputs;
    BackwardFn backward;

    bool is_leaf() const { return !backward; }

    /// Gradient buffer, allocated as zeros on first use.
    Array<Scalar>& grad_buffer() {
        if (grad.size() != data.size()) grad = Array<Scalar>::Zero(data.size());
        return grad;
    }
};

}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <typename Scalar>
class Tensor {
public:
    using Node = detail::Node<Scalar>;
    using NodePtr = typename Node::Ptr;

    Tensor() = default;

    Tensor(Shape shape, Array<Scalar> data) : node_(std::make_shared<Node>()) {
        for (Index e : shape) {
            if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_string(shape));
        }
        if (shape_size(shape) != data.size()) {
            throw ShapeError("shape " + shape_string(shape) + " holds " + std::to_string(shape_size(shape)) +
                             " values, data has " + std::to_string(data.size()));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
    }

    Tensor(Shape shape, std::initializer_list<Scalar> values)
        : Tensor(std::move(shape), Array<Scalar>(Eigen::Map<const Array<Scalar>>(
                                       values.begin(), static_cast<Index>(values.size())))) {}

    Tensor(Shape shape, const std::vector<Scalar>& values)
        : Tensor(std::move(shape),
                 Array<Scalar>(Eigen::Map<const Array<Scalar>>(values.data(), static_cast<Index>(values.size())))) {}

    static Tensor zeros(Shape shape) {
        const Index n = shape_size(shape);
        return Tensor(std::move(shape), Array<Scalar>::Zero(n));
    }

    static Tensor constant(Shape shape, Scalar value) {
        const Index n = shape_size(shape);
        return Tensor(std::move(shape), Array<Scalar>::Constant(n, value));
    }

    static Tensor scalar(Scalar value) { return Tensor(Shape{}, Array<Scalar>::Constant(1, value)); }

    /// Leaf tensor that will accumulate a gradient.
    static Tensor parameter(Shape shape, Array<Scalar> data) {
        Tensor t(std::move(shape), std::move(data));
        t.set_requires_grad(true);
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    Index rank() const { return static_cast<Index>(node_->shape.size()); }
    Index dim(Index axis) const {
        if (axis < 0) axis += rank();
        return node_->shape.at(static_cast<std::size_t>(axis));
    }
    Index size() const { return node_->data.size(); }

    const Array<Scalar>& values() const { return node_->data; }
    /// Mutable access for parameter updates; does not touch the tape.
    Array<Scalar>& mutable_values() { return node_->data; }

    Scalar item() const {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
        return node_->data[0];
    }

    Scalar at(std::initializer_list<Index> index) const { return node_->data[flat_index(index)]; }
    Scalar operator[](Index flat) const { return node_->data[flat]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    const Array<Scalar>& grad() const {
        if (!has_grad()) throw ContractError("tensor has no gradient");
        return node_->grad;
    }
    void zero_grad() {
        if (has_grad()) node_->grad.setZero();
    }
    void clear_grad() { node_->grad.resize(0); }

    const char* op() const { return node_->op; }
    bool is_leaf() const { return node_->is_leaf(); }

    /// Copy of the values as a fresh leaf without gradient history.
    Tensor detached() const { return Tensor(shape(), values()); }

    ConstMatrixMap<Scalar> matrix(Index rows, Index cols) const {
        return ConstMatrixMap<Scalar>(node_->data.data(), rows, cols);
    }

    const NodePtr& node() const { return node_; }
    static Tensor from_node(NodePtr node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    Index flat_index(std::initializer_list<Index> index) const {
        if (static_cast<Index>(index.size()) != rank()) throw ShapeError("index rank mismatch");
        Index flat = 0;
        std::size_t axis = 0;
        for (Index i : index) {
            if (i < 0 || i >= node_->shape[axis]) throw ShapeError("index out of range");
            flat = flat * node_->shape[axis] + i;
            ++axis;
        }
        return flat;
    }

    NodePtr node_;
};

/// Builds an op result; the backward closure is attached only when some
/// input requires a gradient and recording is enabled.
template <typename Scalar>
Tensor<Scalar> make_op_result(const char* op, Shape shape, Array<Scalar> data,
                              std::initializer_list<Tensor<Scalar>> inputs,
                              typename detail::Node<Scalar>::BackwardFn backward) {
    auto node = std::make_shared<detail::Node<Scalar>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs_grad = false;
    if (grad_enabled()) {
        for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor<Scalar>::from_node(std::move(node));
}

/// Same as above for a runtime-sized input list.
template <typename Scalar>
Tensor<Scalar> make_op_result(const char* op, Shape shape, Array<Scalar> data,
                              const std::vector<Tensor<Scalar>>& inputs,
                              typename detail::Node<Scalar>::BackwardFn backward) {
    auto node = std::make_shared<detail::Node<Scalar>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs_grad = false;
    if (grad_enabled()) {
        for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor<Scalar>::from_node(std::move(node));
}

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate;
/// intermediate gradients are reset at the start of every sweep.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
    using NodePtr = typename detail::Node<Scalar>::Ptr;
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<NodePtr> order;
    std::unordered_set<const void*> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            NodePtr child = node->inputs[next++];
            if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto& node : order) {
        if (!node->is_leaf()) node->grad = Array<Scalar>::Zero(node->data.size());
    }
    loss.node()->grad_buffer() += Scalar(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& node = *it;
        if (node->is_leaf()) continue;
        node->backward(node->grad, std::span<const NodePtr>(node->inputs));
    }
}

}  // namespace rmra
