#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pulmo/error.hpp"

namespace pulmo::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Shared handle to a shaped array that can take part in reverse-mode
/// differentiation. Copies alias the same storage; use clone() for a deep
/// copy. Values are row-major; 4-D activations use NHWC layout.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor.
    explicit Tensor(Shape shape, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        node_->value.assign(numel(shape), T(0));
        node_->shape = std::move(shape);
        set_requires_grad(requires_grad);
    }

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        if (values.size() != numel(shape))
            throw UsageError("Tensor: " + std::to_string(values.size()) + " values for shape " + to_string(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        set_requires_grad(requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->value.size(); }

    std::span<T> data() { return node_->value; }
    std::span<const T> data() const { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on && node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), T(0));
    }

    /// Gradient buffer; allocated (zeros) on first access. Handle semantics:
    /// a const handle still grants write access, as backward closures hold
    /// const copies of their inputs.
    std::span<T> grad() const {
        if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), T(0));
        return node_->grad;
    }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    T item() const {
        if (size() != 1) throw UsageError("Tensor::item on shape " + to_string(shape()));
        return node_->value[0];
    }

    Tensor clone() const {
        Tensor copy(shape(), node_->value, false);
        return copy;
    }

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable operations. Each entry is the backward
/// closure of one op; entries are appended in execution order, so every
/// node's inputs precede it and reverse iteration is a valid topological
/// order for gradient propagation.
class Tape {
public:
    explicit Tape(bool enabled = true) : enabled_(enabled) {}

    bool enabled() const { return enabled_; }
    std::size_t size() const { return entries_.size(); }

    void record(std::function<void()> backward_fn) {
        if (enabled_) entries_.push_back(std::move(backward_fn));
    }

    void clear() { entries_.clear(); }

    /// Runs every recorded closure in reverse, then clears the tape.
    void run_backward() {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
        clear();
    }

private:
    bool enabled_;
    std::vector<std::function<void()>> entries_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates through the tape. Gradients
/// accumulate (sum) into every requires_grad tensor reached.
template <typename T>
void backward(Tape& tape, Tensor<T>& loss) {
    if (loss.size() != 1) throw UsageError("backward: loss is not scalar (shape " + to_string(loss.shape()) + ")");
    loss.grad()[0] += T(1);
    tape.run_backward();
}

}  // namespace pulmo::nn
