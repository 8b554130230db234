#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vitgan/nn/layers.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan {

enum class DiscriminatorVariant { conv_patchgan, transformer_patchgan };

struct DiscriminatorConfig {
    DiscriminatorVariant variant = DiscriminatorVariant::conv_patchgan;
    std::size_t image_size = 64;
    std::size_t condition_channels = 3;
    std::size_t image_channels = 3;
    std::size_t base_channels = 64;
    std::size_t num_downsamples = 3;
    // transformer variant
    std::size_t patch_size = 8;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t mlp_ratio = 4;

    std::size_t in_channels() const { return condition_channels + image_channels; }
    /// Side N of the N x N logit map. Conv variant: image_size / 2^d - 2
    /// (d stride-2 k4 p1 convs, then two k4 s1 p1 convs). Transformer
    /// variant: image_size / patch_size.
    std::size_t output_grid() const;
    /// ConfigError if the grid is empty or a layer size is non-integral.
    void validate() const;
};

/// Raw per-patch logits [b, 1, N, N]; no sigmoid applied.
template <typename T>
struct PatchScoreMap {
    Tensor<T> logits;
};

/// Conditional Markovian discriminator. Both variants concatenate condition
/// and candidate along channels and emit an N x N logit map.
template <typename T>
struct Discriminator {
    struct ConvStage {
        nn::Conv2d<T> conv;
        bool has_norm = false;
        nn::BatchNorm<T> bn;
    };

    DiscriminatorConfig config;
    // conv_patchgan
    std::vector<ConvStage> stages;
    nn::Conv2d<T> classifier;
    // transformer_patchgan
    nn::Linear<T> patch_proj;
    nn::Embedding<T> pos_embedding;
    std::vector<nn::TransformerEncoderLayer<T>> encoder;
    nn::LayerNorm<T> encoder_norm;

    Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

    /// Dispatches on config.variant.
    PatchScoreMap<T> discriminate(const Tensor<T>& condition, const Tensor<T>& candidate, nn::Phase phase) const;

    nn::NamedTensors<T> parameters() const;
    nn::NamedTensors<T> buffers() const;

private:
    Tensor<T> conv_forward(const Tensor<T>& x, nn::Phase phase) const;
    Tensor<T> transformer_forward(const Tensor<T>& x) const;
};

/// Conv PatchGAN scoring; `d` must be the conv variant.
template <typename T>
PatchScoreMap<T> discriminate(const Discriminator<T>& d, const Tensor<T>& condition, const Tensor<T>& candidate,
                              nn::Phase phase);

/// Transformer PatchGAN scoring; `d` must be the transformer variant.
template <typename T>
PatchScoreMap<T> transformer_discriminate(const Discriminator<T>& d, const Tensor<T>& condition,
                                          const Tensor<T>& candidate);

extern template struct Discriminator<float>;
extern template struct Discriminator<double>;

}  // namespace vitgan
