#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vitgan/nn/functional.hpp"
#include "vitgan/random.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan::nn {

/// Ordered name -> tensor list. Names are dotted paths ("encoder.0.attn.q.weight").
template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

enum class Phase { train, eval };

enum class Activation { gelu, relu };

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kTransformerInitStd = 0.02;

/// Initialisers draw in double from the shared Rng so that float and double
/// networks built from one seed hold the same values up to rounding.
template <typename T>
Tensor<T> truncated_normal_init(Shape shape, double stddev, Rng& rng);
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), i.e. Kaiming-uniform with a = sqrt(5).
template <typename T>
Tensor<T> kaiming_uniform_init(Shape shape, std::size_t fan_in, Rng& rng);
template <typename T>
Tensor<T> zeros_param(Shape shape);
template <typename T>
Tensor<T> ones_param(Shape shape);

template <typename T>
struct Linear {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out], may be undefined

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [c_out, c_in, k, k]
    Tensor<T> bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    Conv2d() = default;
    Conv2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng,
           bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct ConvTranspose2d {
    Tensor<T> weight;  // [c_in, c_out, k, k]
    Tensor<T> bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride, std::size_t padding,
                    Rng& rng, bool with_bias = true);

    Tensor<T> forward(const Tensor<T>& x) const { return conv_transpose2d(x, weight, bias, stride, padding); }
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct BatchNorm {
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;  // buffers, never require grad
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t channels);

    Tensor<T> forward(const Tensor<T>& x, Phase phase) const;
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
    void buffers(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma, beta;
    double eps = 1e-6;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t dim);

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

template <typename T>
struct Embedding {
    Tensor<T> table;  // [n, d]

    Embedding() = default;
    Embedding(std::size_t n, std::size_t d, Rng& rng);

    Tensor<T> forward(const std::vector<std::size_t>& indices, const Shape& index_shape) const {
        return embedding(table, indices, index_shape);
    }
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

struct AttentionConfig {
    std::size_t embed_dim = 0;
    std::size_t num_heads = 1;

    std::size_t head_dim() const { return embed_dim / num_heads; }
    /// ConfigError unless embed_dim is a positive multiple of num_heads.
    void validate() const;
};

/// Concat(head_1..head_H) W^O with per-head slices of the fused Q/K/V
/// projections: head h uses columns [h d_k, (h+1) d_k).
template <typename T>
struct MultiHeadAttention {
    AttentionConfig config;
    Linear<T> q, k, v, out;

    MultiHeadAttention() = default;
    MultiHeadAttention(const AttentionConfig& config, Rng& rng);

    /// x [b, t, d_model]. `weights`, if given, receives [b, H, t, t].
    Tensor<T> forward(const Tensor<T>& x, Tensor<T>* weights = nullptr) const;
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

struct EncoderConfig {
    std::size_t embed_dim = 0;
    std::size_t num_heads = 1;
    std::size_t mlp_ratio = 4;
    Activation activation = Activation::gelu;

    void validate() const;
};

/// Pre-norm encoder layer:
///   x + MHA(LN(x)), then h + MLP(LN(h)).
template <typename T>
struct TransformerEncoderLayer {
    EncoderConfig config;
    LayerNorm<T> norm1, norm2;
    MultiHeadAttention<T> attn;
    Linear<T> fc1, fc2;

    TransformerEncoderLayer() = default;
    TransformerEncoderLayer(const EncoderConfig& config, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x) const;
    void parameters(const std::string& prefix, NamedTensors<T>& out) const;
};

}  // namespace vitgan::nn
