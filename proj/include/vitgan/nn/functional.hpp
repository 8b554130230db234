#pragma once

#include <cstddef>
#include <vector>

#include "vitgan/tensor.hpp"

namespace vitgan::nn {

/// Output extent of a strided convolution. Throws ConfigError unless
/// (in + 2 padding - kernel) is a non-negative multiple of stride.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);
/// (in - 1) * stride - 2 padding + kernel; ConfigError if not positive.
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// y = x W + b with W laid out [in, out]. `b` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Cross-correlation. x [b, c_in, h, w], weight [c_out, c_in, kh, kw],
/// optional bias [c_out].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding);

/// Adjoint of conv2d with respect to its input. x [b, c_in, h, w],
/// weight [c_in, c_out, kh, kw], optional bias [c_out].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                           std::size_t padding);

struct BatchNormOptions {
    bool training = true;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel normalisation over (batch, spatial) for x [b, c, ...].
/// In training mode uses batch statistics (biased variance) and folds them
/// into the running estimates (unbiased variance); needs b >= 2.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T> running_mean,
                     Tensor<T> running_var, const BatchNormOptions& options);

/// Normalise over the last axis, then gamma * x_hat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps = 1e-6);

/// Gather rows of table [n, d]. Output shape is index_shape + [d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& indices, const Shape& index_shape);

/// softmax(Q K^T / sqrt(d_k)) V over the last two axes. If `weights` is
/// non-null it receives the attention matrix.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Tensor<T>* weights = nullptr);

}  // namespace vitgan::nn
