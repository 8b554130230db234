#include "vitgan/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "vitgan/error.hpp"

namespace vitgan {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, Buffer<T> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                             " elements but data has " + std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), Buffer<T>(n, T{0}));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), Buffer<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return Tensor(Shape{}, Buffer<T>{value});
}

template <typename T>
std::size_t Tensor<T>::size(int axis) const {
    const int r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
    }
    return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad_accumulator() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T{0});
    return impl_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
    out.impl_->grad = impl_->grad;
    return out;
}

template <typename T>
std::optional<std::size_t> Tensor<T>::node_id() const {
    if (impl_->tape == nullptr) return std::nullopt;
    return impl_->node_id;
}

template <typename T>
std::span<const T> GradientMap<T>::at(const Tensor<T>& t) const {
    auto it = index_.find(t.key());
    if (it == index_.end()) throw ContractError("tensor received no gradient in this backward pass");
    return leaves_[it->second].grad();
}

template <typename T>
Tensor<T> Tape<T>::record(Tensor<T> output, std::vector<Tensor<T>> inputs, BackwardFn backward) {
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (!any) return output;
    output.impl_->requires_grad = true;
    output.impl_->tape = this;
    output.impl_->node_id = nodes_.size();
    nodes_.push_back(Node{std::move(inputs), output, std::move(backward)});
    return output;
}

template <typename T>
GradientMap<T> Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    GradientMap<T> result;
    if (loss.impl_->tape != this || !loss.requires_grad()) return result;

    const std::size_t last = loss.impl_->node_id;
    for (std::size_t i = 0; i <= last; ++i) nodes_[i].output.impl_->grad.clear();
    loss.impl_->grad.assign(1, T{1});

    for (std::size_t i = last + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.output.impl_->grad.empty()) continue;
        node.backward(node.output.impl_->grad);
    }

    for (std::size_t i = 0; i <= last; ++i) {
        for (const auto& in : nodes_[i].inputs) {
            if (!in.defined() || !in.requires_grad() || in.impl_->tape == this || in.impl_->grad.empty()) continue;
            if (result.index_.contains(in.key())) continue;
            result.index_.emplace(in.key(), result.leaves_.size());
            result.leaves_.push_back(in);
        }
    }
    return result;
}

namespace {

#ifdef VITGAN_FINITE_CHECKS
std::atomic<bool> g_finite_checks{true};
#else
std::atomic<bool> g_finite_checks{false};
#endif

}  // namespace

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }

template <typename T>
Tensor<T> record_op(Tensor<T> output, std::vector<Tensor<T>> inputs, typename Tape<T>::BackwardFn backward) {
    if (finite_checks_enabled()) {
        for (auto v : output.data()) {
            if (!std::isfinite(v)) {
                throw NumericError("non-finite value in op output of shape " + shape_str(output.shape()));
            }
        }
    }
    Tape<T>* tape = Tape<T>::active();
    if (tape == nullptr) return output;
    return tape->record(std::move(output), std::move(inputs), std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class GradientMap<float>;
template class GradientMap<double>;
template Tensor<float> record_op(Tensor<float>, std::vector<Tensor<float>>, Tape<float>::BackwardFn);
template Tensor<double> record_op(Tensor<double>, std::vector<Tensor<double>>, Tape<double>::BackwardFn);

}  // namespace vitgan
