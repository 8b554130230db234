#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vitgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

/// Allocator with a fixed 64-byte base alignment. Vectorised reductions peel
/// leading elements according to the address, which changes the summation
/// order; pinning the alignment makes results depend on shapes only.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlignment{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

namespace detail {

template <typename T>
struct TensorImpl {
    Shape shape;
    Buffer<T> data;
    Buffer<T> grad;  // empty until something is accumulated
    bool requires_grad = false;
    const Tape<T>* tape = nullptr;  // tape that recorded the op producing this tensor
    std::size_t node_id = 0;
};

}  // namespace detail

/// N-d array with row-major storage. Copies of a Tensor are handles to the
/// same storage; use clone() for a deep copy.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, Buffer<T> data, bool requires_grad = false);
    template <typename Alloc>
    Tensor(Shape shape, const std::vector<T, Alloc>& data, bool requires_grad = false)
        : Tensor(std::move(shape), Buffer<T>(data.begin(), data.end()), requires_grad) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value);

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    /// Size of an axis; negative axes count from the back.
    std::size_t size(int axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    /// In-place access for optimizer updates and running statistics. Never
    /// call on a tensor that a live tape may still read.
    std::span<T> mutable_data() { return impl_->data; }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on);

    bool has_grad() const { return !impl_->grad.empty(); }
    /// Empty span when no gradient was accumulated.
    std::span<const T> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }
    /// Zero-initialised gradient buffer, allocated on first use.
    std::span<T> grad_accumulator() const;

    /// Copy of the data with no history and no gradient requirement.
    Tensor detach() const;
    Tensor clone() const;

    std::optional<std::size_t> node_id() const;

    bool same_as(const Tensor& other) const { return impl_ == other.impl_; }
    const void* key() const { return impl_.get(); }

private:
    friend class Tape<T>;
    std::shared_ptr<detail::TensorImpl<T>> impl_;
};

/// Leaf gradients produced by one backward pass.
template <typename T>
class GradientMap {
public:
    bool empty() const { return leaves_.empty(); }
    std::size_t size() const { return leaves_.size(); }
    bool contains(const Tensor<T>& t) const { return index_.contains(t.key()); }
    /// Throws ContractError if the tensor received no gradient.
    std::span<const T> at(const Tensor<T>& t) const;
    const std::vector<Tensor<T>>& leaves() const { return leaves_; }

private:
    friend class Tape<T>;
    std::vector<Tensor<T>> leaves_;
    std::unordered_map<const void*, std::size_t> index_;
};

/// Records differentiable operations in execution order. Ops record onto the
/// tape made active on the current thread by a Tape::Scope; with no active
/// tape nothing is recorded and results carry no gradient requirement.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(std::span<const T> grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    class Scope {
    public:
        explicit Scope(Tape& tape) : previous_(active_slot()) { active_slot() = &tape; }
        ~Scope() { active_slot() = previous_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active() { return active_slot(); }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Attach `output` to the tape if any input requires grad. Returns output.
    Tensor<T> record(Tensor<T> output, std::vector<Tensor<T>> inputs, BackwardFn backward);

    /// Reverse sweep from a scalar loss. Populates grad() of every
    /// requires_grad leaf reachable from the loss, accumulating into any
    /// existing leaf gradient.
    GradientMap<T> backward(const Tensor<T>& loss);

private:
    struct Node {
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        BackwardFn backward;
    };

    static Tape*& active_slot() {
        thread_local Tape* slot = nullptr;
        return slot;
    }

    std::vector<Node> nodes_;
};

/// Record `output` on the active tape, if there is one and any input needs a
/// gradient. Every differentiable op funnels through here.
template <typename T>
Tensor<T> record_op(Tensor<T> output, std::vector<Tensor<T>> inputs,
                    typename Tape<T>::BackwardFn backward);

/// NaN/Inf scan of every op output. On by default in Debug builds or with
/// VITGAN_FINITE_CHECKS; the test suites switch it on explicitly.
bool finite_checks_enabled();
void set_finite_checks(bool on);

template <typename T>
GradientMap<T> backward(const Tensor<T>& loss, Tape<T>& tape) {
    return tape.backward(loss);
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradientMap<float>;
extern template class GradientMap<double>;

}  // namespace vitgan
