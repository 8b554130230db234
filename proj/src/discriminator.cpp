#include "vitgan/discriminator.hpp"

#include <algorithm>

#include "vitgan/error.hpp"
#include "vitgan/generator.hpp"
#include "vitgan/ops.hpp"

namespace vitgan {

namespace {

constexpr std::size_t kKernel = 4;
constexpr std::size_t kPadding = 1;
constexpr std::size_t kMaxWidthFactor = 8;

}  // namespace

std::size_t DiscriminatorConfig::output_grid() const {
    if (variant == DiscriminatorVariant::transformer_patchgan) {
        return patch_size == 0 ? 0 : image_size / patch_size;
    }
    std::size_t s = image_size;
    for (std::size_t i = 0; i < num_downsamples; ++i) s = nn::conv_output_size(s, kKernel, 2, kPadding);
    s = nn::conv_output_size(s, kKernel, 1, kPadding);
    return nn::conv_output_size(s, kKernel, 1, kPadding);
}

void DiscriminatorConfig::validate() const {
    if (condition_channels == 0 || image_channels == 0) {
        throw ConfigError("discriminator channel counts must be positive");
    }
    if (variant == DiscriminatorVariant::transformer_patchgan) {
        if (patch_size == 0 || image_size % patch_size != 0) {
            throw ConfigError("discriminator image_size " + std::to_string(image_size) +
                              " is not divisible by patch_size " + std::to_string(patch_size));
        }
        if (num_layers == 0) throw ConfigError("transformer discriminator needs at least one layer");
        nn::EncoderConfig{embed_dim, num_heads, mlp_ratio, nn::Activation::gelu}.validate();
        return;
    }
    if (base_channels == 0 || num_downsamples == 0) {
        throw ConfigError("discriminator base_channels and num_downsamples must be positive");
    }
    std::size_t grid = 0;
    try {
        grid = output_grid();
    } catch (const ConfigError& e) {
        throw ConfigError("discriminator with " + std::to_string(num_downsamples) + " downsamples cannot score " +
                          std::to_string(image_size) + "px inputs: " + e.what());
    }
    if (grid == 0) throw ConfigError("discriminator output grid is empty");
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(seed);
    if (config.variant == DiscriminatorVariant::transformer_patchgan) {
        const std::size_t d = config.embed_dim;
        const std::size_t grid = config.image_size / config.patch_size;
        patch_proj = nn::Linear<T>(config.in_channels() * config.patch_size * config.patch_size, d, rng);
        pos_embedding = nn::Embedding<T>(grid * grid, d, rng);
        const nn::EncoderConfig enc{d, config.num_heads, config.mlp_ratio, nn::Activation::gelu};
        for (std::size_t i = 0; i < config.num_layers; ++i) encoder.emplace_back(enc, rng);
        encoder_norm = nn::LayerNorm<T>(d);
        classifier = nn::Conv2d<T>(d, 1, 1, 1, 0, rng, true);
        return;
    }
    const std::size_t c = config.base_channels;
    std::size_t channels = config.in_channels();
    for (std::size_t i = 0; i <= config.num_downsamples; ++i) {
        const std::size_t width = c * std::min<std::size_t>(std::size_t{1} << i, kMaxWidthFactor);
        const std::size_t stride = i < config.num_downsamples ? 2 : 1;
        ConvStage stage;
        stage.has_norm = i > 0;
        stage.conv = nn::Conv2d<T>(channels, width, kKernel, stride, kPadding, rng, !stage.has_norm);
        if (stage.has_norm) stage.bn = nn::BatchNorm<T>(width);
        stages.push_back(std::move(stage));
        channels = width;
    }
    classifier = nn::Conv2d<T>(channels, 1, kKernel, 1, kPadding, rng, true);
}

template <typename T>
Tensor<T> Discriminator<T>::conv_forward(const Tensor<T>& x, nn::Phase phase) const {
    Tensor<T> h = x;
    for (const auto& stage : stages) {
        h = stage.conv.forward(h);
        if (stage.has_norm) h = stage.bn.forward(h, phase);
        h = leaky_relu(h, static_cast<T>(nn::kLeakySlope));
    }
    return classifier.forward(h);
}

template <typename T>
Tensor<T> Discriminator<T>::transformer_forward(const Tensor<T>& x) const {
    const std::size_t b = x.size(0), g = config.image_size / config.patch_size;
    Tensor<T> tokens = embed_patches(extract_patches(x, config.patch_size), patch_proj, pos_embedding);
    for (const auto& layer : encoder) tokens = layer.forward(tokens);
    tokens = encoder_norm.forward(tokens);
    Tensor<T> grid = reshape(transpose(tokens, 1, 2), {b, config.embed_dim, g, g});
    return classifier.forward(grid);
}

template <typename T>
PatchScoreMap<T> Discriminator<T>::discriminate(const Tensor<T>& condition, const Tensor<T>& candidate,
                                                nn::Phase phase) const {
    const auto bad = [&] {
        return condition.rank() != 4 || candidate.rank() != 4 || condition.size(0) != candidate.size(0) ||
               condition.size(2) != candidate.size(2) || condition.size(3) != candidate.size(3);
    };
    if (bad()) {
        throw DimensionError("condition " + shape_str(condition.shape()) + " and candidate " +
                             shape_str(candidate.shape()) + " must share batch and spatial dims");
    }
    if (condition.size(1) != config.condition_channels || candidate.size(1) != config.image_channels ||
        condition.size(2) != config.image_size || condition.size(3) != config.image_size) {
        throw DimensionError("discriminator configured for " + std::to_string(config.condition_channels) + "+" +
                             std::to_string(config.image_channels) + " channels at " +
                             std::to_string(config.image_size) + "px, got condition " +
                             shape_str(condition.shape()) + " and candidate " + shape_str(candidate.shape()));
    }
    Tensor<T> x = concat<T>({condition, candidate}, 1);
    if (config.variant == DiscriminatorVariant::transformer_patchgan) return {transformer_forward(x)};
    return {conv_forward(x, phase)};
}

template <typename T>
nn::NamedTensors<T> Discriminator<T>::parameters() const {
    nn::NamedTensors<T> out;
    if (config.variant == DiscriminatorVariant::transformer_patchgan) {
        patch_proj.parameters("patch_proj", out);
        pos_embedding.parameters("pos_embedding", out);
        for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].parameters("encoder." + std::to_string(i), out);
        encoder_norm.parameters("encoder_norm", out);
    } else {
        for (std::size_t i = 0; i < stages.size(); ++i) {
            const std::string prefix = "stage." + std::to_string(i);
            stages[i].conv.parameters(prefix + ".conv", out);
            if (stages[i].has_norm) stages[i].bn.parameters(prefix + ".bn", out);
        }
    }
    classifier.parameters("classifier", out);
    return out;
}

template <typename T>
nn::NamedTensors<T> Discriminator<T>::buffers() const {
    nn::NamedTensors<T> out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].has_norm) stages[i].bn.buffers("stage." + std::to_string(i) + ".bn", out);
    }
    return out;
}

template <typename T>
PatchScoreMap<T> discriminate(const Discriminator<T>& d, const Tensor<T>& condition, const Tensor<T>& candidate,
                              nn::Phase phase) {
    if (d.config.variant != DiscriminatorVariant::conv_patchgan) {
        throw ConfigError("discriminate() needs the conv PatchGAN variant");
    }
    return d.discriminate(condition, candidate, phase);
}

template <typename T>
PatchScoreMap<T> transformer_discriminate(const Discriminator<T>& d, const Tensor<T>& condition,
                                          const Tensor<T>& candidate) {
    if (d.config.variant != DiscriminatorVariant::transformer_patchgan) {
        throw ConfigError("transformer_discriminate() needs the transformer PatchGAN variant");
    }
    return d.discriminate(condition, candidate, nn::Phase::train);
}

#define VITGAN_INSTANTIATE_DISCRIMINATOR(T)                                                                      \
    template struct Discriminator<T>;                                                                            \
    template PatchScoreMap<T> discriminate(const Discriminator<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                           nn::Phase);                                                           \
    template PatchScoreMap<T> transformer_discriminate(const Discriminator<T>&, const Tensor<T>&, const Tensor<T>&);

VITGAN_INSTANTIATE_DISCRIMINATOR(float)
VITGAN_INSTANTIATE_DISCRIMINATOR(double)

}  // namespace vitgan
