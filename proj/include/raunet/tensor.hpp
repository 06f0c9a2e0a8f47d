#pragma once

// Dense channels-first tensors with tape-based reverse-mode differentiation.
//
// Layout: [batch, channels, (depth,) height, width], row-major, contiguous.
// A Tensor is a cheap shared handle; copies alias the same storage.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace raunet {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, masks, volumes).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first written
    bool requires_grad = false;
    Tape<T>* tape = nullptr;
    std::optional<std::size_t> node_id;

    std::vector<T>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    std::vector<T>& values() { return impl_->data; }
    const std::vector<T>& values() const { return impl_->data; }

    // Single element of a one-element tensor.
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    // Leaves that require grad get a zeroed gradient buffer immediately.
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
    std::span<T> grad() { return impl_->ensure_grad(); }
    std::span<const T> grad() const { return impl_->ensure_grad(); }
    void zero_grad();

    std::optional<std::size_t> node_id() const { return impl_->node_id; }
    Tape<T>* tape() const { return impl_->tape; }

    // Fresh storage, same values, no tape link, no gradient.
    Tensor detach() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

enum class OpKind {
    Conv,
    MaxPool,
    Upsample,
    BatchNorm,
    Relu,
    Sigmoid,
    Add,
    Mul,
    AddScalar,
    Scale,
    Concat,
    Sum,
    DiceLoss,
};

const char* op_name(OpKind kind);

// Append-only record of differentiable operations. Node i may only consume
// tensors produced by nodes j < i (or leaves), so append order is a
// topological order and backward walks it in reverse.
template <typename T>
class Tape {
public:
    using ImplPtr = std::shared_ptr<TensorImpl<T>>;
    using BackwardFn = std::function<void()>;

    struct Node {
        OpKind kind;
        std::vector<ImplPtr> inputs;
        std::vector<std::optional<std::size_t>> input_nodes;
        ImplPtr output;
        BackwardFn backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Appends a node producing `output`; marks output as requiring grad.
    std::size_t record(OpKind kind, std::vector<ImplPtr> inputs, const ImplPtr& output,
                       BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor.
    void backward(const Tensor<T>& loss);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::size_t index) const { return nodes_.at(index); }
    const std::vector<std::size_t>& last_visit_order() const { return visit_order_; }

    // Drops all nodes (and the activations they keep alive).
    void clear();

private:
    std::vector<Node> nodes_;
    std::vector<std::size_t> visit_order_;
};

namespace detail {
template <typename T>
Tape<T>*& active_tape_slot() {
    thread_local Tape<T>* slot = nullptr;
    return slot;
}
}  // namespace detail

// Tape that differentiable ops record onto for the current thread, or null.
template <typename T>
Tape<T>* active_tape() {
    return detail::active_tape_slot<T>();
}

// Makes `tape` the recording target for this thread while in scope.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : previous_(detail::active_tape_slot<T>()) {
        detail::active_tape_slot<T>() = &tape;
    }
    ~TapeScope() { detail::active_tape_slot<T>() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

// Convenience: backward on the tape that produced `loss`.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace raunet
