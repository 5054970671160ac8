#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "nseg/core/tensor.hpp"

namespace nseg {

// A trainable tensor. `grad` stays empty until a backward pass reaches the
// parameter (or zero_grad() allocates it); the optimizer refuses to step a
// parameter whose gradient was never populated.
template <class T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> velocity;

    Parameter(std::string name_, Tensor<T> value_)
        : name(std::move(name_)), value(std::move(value_)), velocity(value.shape()) {
        if (name.empty()) throw ConfigError("parameter name must be nonempty");
    }

    bool has_grad() const noexcept { return grad.shape() == value.shape() && grad.size() == value.size(); }

    void zero_grad() {
        if (!has_grad())
            grad = Tensor<T>(value.shape());
        else
            grad.fill(T{});
    }
};

template <class T>
class Graph;

// Handle to one node of a Graph. Cheap to copy; only valid while its graph lives.
template <class T>
class Var {
public:
    Var() = default;
    Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

    const Tensor<T>& value() const { return graph_->value(id_); }
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const { return graph_->requires_grad(id_); }
    Graph<T>& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    Graph<T>* graph_ = nullptr;
    std::size_t id_ = 0;
};

// Tape of executed operations. Nodes are appended in execution order, so the
// tape is topologically sorted by construction and backward is one reverse sweep.
// A graph is single-threaded; use a fresh graph per batch.
template <class T>
class Graph {
public:
    // Called with the graph and the gradient flowing into the node's output;
    // accumulates into input gradients via grad_slot().
    using BackwardFn = std::function<void(Graph&, const Tensor<T>&)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var<T> constant(Tensor<T> value) { return push(std::move(value), "constant", false, nullptr, {}); }

    // Leaf whose gradient is kept on the node; used for inputs in gradient checks.
    Var<T> leaf(Tensor<T> value) { return push(std::move(value), "leaf", true, nullptr, {}); }

    Var<T> parameter(Parameter<T>& p) {
        Node n;
        n.op = "parameter";
        n.param = &p;
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return Var<T>(this, nodes_.size() - 1);
    }

    // Records an operation output. `backward` is dropped when no input needs a gradient.
    Var<T> record(Tensor<T> value, const char* op, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
        bool needs = false;
        std::vector<std::size_t> ids;
        ids.reserve(inputs.size());
        for (const auto& v : inputs) {
            if (v.valid() && &v.graph() != this) throw StateError(std::string(op) + ": input from a different graph");
            ids.push_back(v.id());
            needs = needs || requires_grad(v.id());
        }
        return push(std::move(value), op, needs, needs ? std::move(backward) : BackwardFn{}, std::move(ids));
    }

    const Tensor<T>& value(std::size_t id) const {
        const Node& n = nodes_.at(id);
        return n.param ? n.param->value : n.value;
    }

    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    // Gradient buffer of a node, allocated as zeros on first use. Returns
    // nullptr for nodes that do not need a gradient.
    Tensor<T>* grad_slot(std::size_t id) {
        Node& n = nodes_.at(id);
        if (!n.requires_grad) return nullptr;
        const Tensor<T>& v = value(id);
        if (n.grad.shape() != v.shape() || n.grad.size() != v.size()) n.grad = Tensor<T>(v.shape());
        return &n.grad;
    }

    // Gradient of a leaf after backward(); empty tensor if none reached it.
    const Tensor<T>& grad(const Var<T>& v) const { return nodes_.at(v.id()).grad; }

    const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
    const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_.at(id).inputs; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Reverse sweep from a scalar loss. Parameter gradients accumulate into
    // Parameter::grad across calls; node gradients are reset each call.
    void backward(const Var<T>& loss) {
        if (&loss.graph() != this) throw StateError("backward: loss belongs to a different graph");
        if (value(loss.id()).size() != 1)
            throw ShapeError("backward: loss must be a scalar, got shape " + value(loss.id()).shape().str());
        for (auto& n : nodes_) n.grad = Tensor<T>();
        if (!requires_grad(loss.id())) {
            touch_parameters();
            return;
        }
        grad_slot(loss.id())->fill(T{1});
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            // The node's grad is complete here: every consumer has a larger index.
            // Interior gradients are released once propagated.
            Tensor<T> upstream = std::move(n.grad);
            n.grad = Tensor<T>();
            n.backward(*this, upstream);
        }
        touch_parameters();
        for (auto& n : nodes_) {
            if (!n.param || n.grad.empty()) continue;
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<std::size_t> inputs;
        const char* op = "";
        BackwardFn backward;
        Parameter<T>* param = nullptr;
        bool requires_grad = false;
    };

    Var<T> push(Tensor<T> value, const char* op, bool needs_grad, BackwardFn fn, std::vector<std::size_t> inputs) {
        Node n;
        n.value = std::move(value);
        n.op = op;
        n.requires_grad = needs_grad;
        n.backward = std::move(fn);
        n.inputs = std::move(inputs);
        nodes_.push_back(std::move(n));
        return Var<T>(this, nodes_.size() - 1);
    }

    // Every parameter that took part in the forward pass ends up with an
    // allocated gradient, zero if the loss does not depend on it.
    void touch_parameters() {
        for (auto& n : nodes_)
            if (n.param && !n.param->has_grad()) n.param->zero_grad();
    }

    std::deque<Node> nodes_;  // deque: references to earlier values stay valid as the tape grows
};

}  // namespace nseg
