#include "vitgan/nn/layers.hpp"

#include <cmath>

#include "vitgan/error.hpp"
#include "vitgan/ops.hpp"

namespace vitgan::nn {

template <typename T>
Tensor<T> truncated_normal_init(Shape shape, double stddev, Rng& rng) {
    Buffer<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(rng.truncated_normal(stddev));
    return Tensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> kaiming_uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Buffer<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> zeros_param(Shape shape) {
    return Tensor<T>::zeros(std::move(shape)).set_requires_grad(true);
}

template <typename T>
Tensor<T> ones_param(Shape shape) {
    return Tensor<T>::full(std::move(shape), T{1}).set_requires_grad(true);
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(truncated_normal_init<T>({in, out}, kTransformerInitStd, rng)) {
    if (with_bias) bias = zeros_param<T>({out});
}

template <typename T>
void Linear<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride_,
                  std::size_t padding_, Rng& rng, bool with_bias)
    : weight(kaiming_uniform_init<T>({c_out, c_in, kernel, kernel}, c_in * kernel * kernel, rng)),
      stride(stride_),
      padding(padding_) {
    if (with_bias) bias = zeros_param<T>({c_out});
}

template <typename T>
void Conv2d<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride_,
                                    std::size_t padding_, Rng& rng, bool with_bias)
    : weight(kaiming_uniform_init<T>({c_in, c_out, kernel, kernel}, c_out * kernel * kernel, rng)),
      stride(stride_),
      padding(padding_) {
    if (with_bias) bias = zeros_param<T>({c_out});
}

template <typename T>
void ConvTranspose2d<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : gamma(ones_param<T>({channels})),
      beta(zeros_param<T>({channels})),
      running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T{1})) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Phase phase) const {
    return batch_norm(x, gamma, beta, running_mean, running_var,
                      BatchNormOptions{phase == Phase::train, momentum, eps});
}

template <typename T>
void BatchNorm<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

template <typename T>
void BatchNorm<T>::buffers(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".running_mean", running_mean);
    out.emplace_back(prefix + ".running_var", running_var);
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim) : gamma(ones_param<T>({dim})), beta(zeros_param<T>({dim})) {}

template <typename T>
void LayerNorm<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

template <typename T>
Embedding<T>::Embedding(std::size_t n, std::size_t d, Rng& rng)
    : table(truncated_normal_init<T>({n, d}, kTransformerInitStd, rng)) {}

template <typename T>
void Embedding<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    out.emplace_back(prefix + ".table", table);
}

void AttentionConfig::validate() const {
    if (embed_dim == 0 || num_heads == 0) throw ConfigError("attention embed_dim and num_heads must be positive");
    if (embed_dim % num_heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                          std::to_string(num_heads));
    }
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(const AttentionConfig& cfg, Rng& rng) : config(cfg) {
    config.validate();
    const std::size_t d = config.embed_dim;
    q = Linear<T>(d, d, rng);
    k = Linear<T>(d, d, rng);
    v = Linear<T>(d, d, rng);
    out = Linear<T>(d, d, rng);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T>& x, Tensor<T>* weights) const {
    if (x.rank() != 3 || x.size(2) != config.embed_dim) {
        throw DimensionError("multi-head attention expects [b, t, " + std::to_string(config.embed_dim) + "], got " +
                             shape_str(x.shape()));
    }
    const std::size_t b = x.size(0), t = x.size(1), h = config.num_heads, dk = config.head_dim();
    auto split = [&](const Tensor<T>& y) { return permute(reshape(y, {b, t, h, dk}), {0, 2, 1, 3}); };
    Tensor<T> heads = attention(split(q.forward(x)), split(k.forward(x)), split(v.forward(x)), weights);
    Tensor<T> merged = reshape(permute(heads, {0, 2, 1, 3}), {b, t, config.embed_dim});
    return out.forward(merged);
}

template <typename T>
void MultiHeadAttention<T>::parameters(const std::string& prefix, NamedTensors<T>& dst) const {
    q.parameters(prefix + ".q", dst);
    k.parameters(prefix + ".k", dst);
    v.parameters(prefix + ".v", dst);
    out.parameters(prefix + ".out", dst);
}

void EncoderConfig::validate() const {
    AttentionConfig{embed_dim, num_heads}.validate();
    if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
}

template <typename T>
TransformerEncoderLayer<T>::TransformerEncoderLayer(const EncoderConfig& cfg, Rng& rng) : config(cfg) {
    config.validate();
    const std::size_t d = config.embed_dim;
    norm1 = LayerNorm<T>(d);
    attn = MultiHeadAttention<T>(AttentionConfig{d, config.num_heads}, rng);
    norm2 = LayerNorm<T>(d);
    fc1 = Linear<T>(d, d * config.mlp_ratio, rng);
    fc2 = Linear<T>(d * config.mlp_ratio, d, rng);
}

template <typename T>
Tensor<T> TransformerEncoderLayer<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = add(x, attn.forward(norm1.forward(x)));
    Tensor<T> hidden = fc1.forward(norm2.forward(h));
    hidden = config.activation == Activation::gelu ? gelu(hidden) : relu(hidden);
    return add(h, fc2.forward(hidden));
}

template <typename T>
void TransformerEncoderLayer<T>::parameters(const std::string& prefix, NamedTensors<T>& out) const {
    norm1.parameters(prefix + ".norm1", out);
    attn.parameters(prefix + ".attn", out);
    norm2.parameters(prefix + ".norm2", out);
    fc1.parameters(prefix + ".fc1", out);
    fc2.parameters(prefix + ".fc2", out);
}

#define VITGAN_INSTANTIATE_LAYERS(T)                                          \
    template Tensor<T> truncated_normal_init<T>(Shape, double, Rng&);         \
    template Tensor<T> kaiming_uniform_init<T>(Shape, std::size_t, Rng&);     \
    template Tensor<T> zeros_param<T>(Shape);                                 \
    template Tensor<T> ones_param<T>(Shape);                                  \
    template struct Linear<T>;                                                \
    template struct Conv2d<T>;                                                \
    template struct ConvTranspose2d<T>;                                       \
    template struct BatchNorm<T>;                                             \
    template struct LayerNorm<T>;                                             \
    template struct Embedding<T>;                                             \
    template struct MultiHeadAttention<T>;                                    \
    template struct TransformerEncoderLayer<T>;

VITGAN_INSTANTIATE_LAYERS(float)
VITGAN_INSTANTIATE_LAYERS(double)

}  // namespace vitgan::nn
