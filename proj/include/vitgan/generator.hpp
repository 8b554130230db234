#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vitgan/nn/layers.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan {

struct GeneratorConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t in_channels = 3;
    std::size_t embed_dim = 128;
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t residual_channels = 128;
    std::size_t num_residual_blocks = 1;
    std::size_t out_channels = 3;
    nn::Activation activation = nn::Activation::gelu;

    /// ConfigError for: image_size not a multiple of patch_size, patch_size
    /// not a power of two, embed_dim not divisible by num_heads, or
    /// residual_channels not divisible by 2^log2(patch_size).
    void validate() const;

    std::size_t grid() const { return image_size / patch_size; }
    /// (image_size / patch_size)^2
    std::size_t num_patches() const { return grid() * grid(); }
    std::size_t patch_dim() const { return in_channels * patch_size * patch_size; }
    /// log2(patch_size); each block doubles the spatial size.
    std::size_t num_upsample_blocks() const;
};

/// img [b, c, s, s] -> [b, (s/P)^2, P*P*c]. Patches are ordered row-major
/// over the patch grid; within a patch the layout is (row, col, channel).
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& img, std::size_t patch_size);

/// Inverse of extract_patches.
template <typename T>
Tensor<T> assemble_patches(const Tensor<T>& patches, std::size_t channels, std::size_t patch_size);

/// Linear patch projection plus the learnable position table, looked up by
/// patch index and broadcast over the batch.
template <typename T>
Tensor<T> embed_patches(const Tensor<T>& patches, const nn::Linear<T>& projection,
                        const nn::Embedding<T>& positions);

template <typename T>
struct ResidualBlock {
    nn::Conv2d<T> conv1, conv2;
    nn::BatchNorm<T> bn1, bn2;

    ResidualBlock() = default;
    ResidualBlock(std::size_t channels, Rng& rng);

    void parameters(const std::string& prefix, nn::NamedTensors<T>& out) const;
    void buffers(const std::string& prefix, nn::NamedTensors<T>& out) const;
};

/// x + BN(conv(ReLU(BN(conv(x))))) with 3x3 same-padding convolutions.
template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlock<T>& block, nn::Phase phase);

template <typename T>
struct UpsampleBlock {
    nn::ConvTranspose2d<T> conv;
    nn::BatchNorm<T> bn;

    UpsampleBlock() = default;
    UpsampleBlock(std::size_t c_in, std::size_t c_out, Rng& rng);

    void parameters(const std::string& prefix, nn::NamedTensors<T>& out) const;
    void buffers(const std::string& prefix, nn::NamedTensors<T>& out) const;
};

/// LeakyReLU(BN(conv_transpose(x))) with k=4, stride 2, padding 1.
template <typename T>
Tensor<T> upsample_block(const Tensor<T>& x, const UpsampleBlock<T>& block, nn::Phase phase);

/// Hybrid transformer/convolutional image-to-image generator:
///   patches -> embeddings -> N encoder layers -> token grid
///   -> 1x1 bridge conv -> residual blocks -> log2(P) upsampling blocks
///   -> 3x3 conv -> tanh.
template <typename T>
struct Generator {
    GeneratorConfig config;
    nn::Linear<T> patch_proj;
    nn::Embedding<T> pos_embedding;  // [num_patches, embed_dim]
    std::vector<nn::TransformerEncoderLayer<T>> encoder;
    nn::LayerNorm<T> encoder_norm;
    nn::Conv2d<T> bridge;
    std::vector<ResidualBlock<T>> residual;
    std::vector<UpsampleBlock<T>> upsample;
    nn::Conv2d<T> head;

    Generator(const GeneratorConfig& config, std::uint64_t seed);

    /// img [b, in_channels, s, s] -> [b, out_channels, s, s] in [-1, 1].
    Tensor<T> forward(const Tensor<T>& img, nn::Phase phase) const;

    nn::NamedTensors<T> parameters() const;
    /// Batch-norm running statistics.
    nn::NamedTensors<T> buffers() const;
};

extern template struct Generator<float>;
extern template struct Generator<double>;

}  // namespace vitgan
