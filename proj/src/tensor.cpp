#include "raunet/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "raunet/random.hpp"

namespace raunet {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {
void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
    for (std::size_t e : shape)
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
    validate_shape(shape);
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
    validate_shape(shape);
    if (values.size() != shape_numel(shape))
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    impl_->data = std::move(values);
    impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    Tensor out(std::move(shape));
    for (T& v : out.impl_->data) v = static_cast<T>(stddev * standard_normal(rng));
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    Tensor out(std::move(shape));
    for (T& v : out.impl_->data) v = static_cast<T>(lo + (hi - lo) * uniform_unit(rng));
    return out;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() needs a one-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    if (flag) impl_->ensure_grad();
    return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (impl_->requires_grad || has_grad()) impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(impl_->shape, impl_->data);
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Conv: return "conv";
        case OpKind::MaxPool: return "max_pool";
        case OpKind::Upsample: return "upsample";
        case OpKind::BatchNorm: return "batch_norm";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Scale: return "scale";
        case OpKind::Concat: return "concat_channels";
        case OpKind::Sum: return "sum";
        case OpKind::DiceLoss: return "dice_loss";
    }
    return "unknown";
}

template <typename T>
std::size_t Tape<T>::record(OpKind kind, std::vector<ImplPtr> inputs, const ImplPtr& output,
                            BackwardFn backward) {
    const std::size_t id = nodes_.size();
    Node node;
    node.kind = kind;
    node.input_nodes.reserve(inputs.size());
    for (const auto& in : inputs)
        node.input_nodes.push_back(in->tape == this ? in->node_id : std::nullopt);
    node.inputs = std::move(inputs);
    node.output = output;
    node.backward = std::move(backward);
    output->requires_grad = true;
    output->tape = this;
    output->node_id = id;
    nodes_.push_back(std::move(node));
    return id;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (loss.tape() != this || !loss.node_id())
        throw std::invalid_argument("backward: loss was not produced on this tape");

    visit_order_.clear();
    loss.impl()->ensure_grad()[0] += T(1);
    for (std::size_t i = *loss.node_id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.output->grad.size() != node.output->data.size()) continue;
        visit_order_.push_back(i);
        node.backward();
    }
}

template <typename T>
void Tape<T>::clear() {
    for (auto& node : nodes_) {
        node.output->tape = nullptr;
        node.output->node_id.reset();
    }
    nodes_.clear();
    visit_order_.clear();
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.tape() == nullptr)
        throw std::invalid_argument("backward: loss is not attached to a tape");
    loss.tape()->backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace raunet
