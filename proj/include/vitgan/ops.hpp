#pragma once

#include <cstddef>
#include <vector>

#include "vitgan/tensor.hpp"

namespace vitgan {

// Binary ops broadcast NumPy-style: shapes are right-aligned and size-1 axes
// stretch. Every op records its backward rule on the active tape.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha = T(0.2));
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
/// Subgradient sign(x), with sign(0) = 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& x);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Max-shifted softmax along `axis` (negative counts from the back).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

/// Sum and mean over every element, producing a rank-0 tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Plain data conversion, no history.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
    std::vector<To> out(x.data().begin(), x.data().end());
    return Tensor<To>(x.shape(), std::move(out));
}

/// Resolve a possibly negative axis against a rank.
std::size_t normalize_axis(int axis, std::size_t rank);
/// Result shape of broadcasting a against b; DimensionError names both.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    return mul(a, b);
}

}  // namespace vitgan
