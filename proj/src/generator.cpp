#include "vitgan/generator.hpp"

#include <bit>

#include "vitgan/error.hpp"
#include "vitgan/ops.hpp"

namespace vitgan {

void GeneratorConfig::validate() const {
    if (image_size == 0 || patch_size == 0) throw ConfigError("generator image_size and patch_size must be positive");
    if (image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (!std::has_single_bit(patch_size)) {
        throw ConfigError("patch_size " + std::to_string(patch_size) + " must be a power of two");
    }
    if (in_channels == 0 || out_channels == 0) throw ConfigError("generator channel counts must be positive");
    if (num_layers == 0) throw ConfigError("generator needs at least one transformer layer");
    nn::EncoderConfig{embed_dim, num_heads, mlp_ratio, activation}.validate();
    const std::size_t halvings = std::size_t{1} << num_upsample_blocks();
    if (residual_channels == 0 || residual_channels % halvings != 0) {
        throw ConfigError("residual_channels " + std::to_string(residual_channels) + " must be divisible by " +
                          std::to_string(halvings) + " for patch_size " + std::to_string(patch_size));
    }
}

std::size_t GeneratorConfig::num_upsample_blocks() const {
    return static_cast<std::size_t>(std::countr_zero(patch_size));
}

template <typename T>
Tensor<T> extract_patches(const Tensor<T>& img, std::size_t patch_size) {
    if (img.rank() != 4 || img.size(2) != img.size(3)) {
        throw DimensionError("extract_patches expects a square [b, c, s, s] image, got " + shape_str(img.shape()));
    }
    const std::size_t b = img.size(0), c = img.size(1), s = img.size(2);
    if (patch_size == 0 || s % patch_size != 0) {
        throw ConfigError("image size " + std::to_string(s) + " is not divisible by patch size " +
                          std::to_string(patch_size));
    }
    const std::size_t g = s / patch_size;
    Tensor<T> grid = reshape(img, {b, c, g, patch_size, g, patch_size});
    Tensor<T> ordered = permute(grid, {0, 2, 4, 3, 5, 1});
    return reshape(ordered, {b, g * g, patch_size * patch_size * c});
}

template <typename T>
Tensor<T> assemble_patches(const Tensor<T>& patches, std::size_t channels, std::size_t patch_size) {
    if (patches.rank() != 3 || patches.size(2) != channels * patch_size * patch_size) {
        throw DimensionError("assemble_patches: shape " + shape_str(patches.shape()) + " does not hold " +
                             std::to_string(channels) + "-channel patches of size " + std::to_string(patch_size));
    }
    const std::size_t b = patches.size(0), n = patches.size(1);
    std::size_t g = 0;
    while (g * g < n) ++g;
    if (g * g != n) throw DimensionError("patch count " + std::to_string(n) + " is not a square grid");
    Tensor<T> grid = reshape(patches, {b, g, g, patch_size, patch_size, channels});
    Tensor<T> ordered = permute(grid, {0, 5, 1, 3, 2, 4});
    return reshape(ordered, {b, channels, g * patch_size, g * patch_size});
}

template <typename T>
Tensor<T> embed_patches(const Tensor<T>& patches, const nn::Linear<T>& projection,
                        const nn::Embedding<T>& positions) {
    if (patches.rank() != 3 || patches.size(2) != projection.weight.size(0)) {
        throw DimensionError("embed_patches: patches " + shape_str(patches.shape()) + " vs projection " +
                             shape_str(projection.weight.shape()));
    }
    const std::size_t n = patches.size(1);
    if (positions.table.size(0) != n) {
        throw DimensionError("position table has " + std::to_string(positions.table.size(0)) + " rows for " +
                             std::to_string(n) + " patches");
    }
    std::vector<std::size_t> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = i;
    return add(projection.forward(patches), positions.forward(index, {n}));
}

template <typename T>
ResidualBlock<T>::ResidualBlock(std::size_t channels, Rng& rng)
    : conv1(channels, channels, 3, 1, 1, rng, false),
      conv2(channels, channels, 3, 1, 1, rng, false),
      bn1(channels),
      bn2(channels) {}

template <typename T>
void ResidualBlock<T>::parameters(const std::string& prefix, nn::NamedTensors<T>& out) const {
    conv1.parameters(prefix + ".conv1", out);
    bn1.parameters(prefix + ".bn1", out);
    conv2.parameters(prefix + ".conv2", out);
    bn2.parameters(prefix + ".bn2", out);
}

template <typename T>
void ResidualBlock<T>::buffers(const std::string& prefix, nn::NamedTensors<T>& out) const {
    bn1.buffers(prefix + ".bn1", out);
    bn2.buffers(prefix + ".bn2", out);
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlock<T>& block, nn::Phase phase) {
    if (x.rank() != 4 || x.size(1) != block.conv1.weight.size(1)) {
        throw ConfigError("residual block expects " + std::to_string(block.conv1.weight.size(1)) +
                          " channels, got input " + shape_str(x.shape()));
    }
    Tensor<T> h = relu(block.bn1.forward(block.conv1.forward(x), phase));
    h = block.bn2.forward(block.conv2.forward(h), phase);
    return add(x, h);
}

template <typename T>
UpsampleBlock<T>::UpsampleBlock(std::size_t c_in, std::size_t c_out, Rng& rng)
    : conv(c_in, c_out, 4, 2, 1, rng, false), bn(c_out) {}

template <typename T>
void UpsampleBlock<T>::parameters(const std::string& prefix, nn::NamedTensors<T>& out) const {
    conv.parameters(prefix + ".conv", out);
    bn.parameters(prefix + ".bn", out);
}

template <typename T>
void UpsampleBlock<T>::buffers(const std::string& prefix, nn::NamedTensors<T>& out) const {
    bn.buffers(prefix + ".bn", out);
}

template <typename T>
Tensor<T> upsample_block(const Tensor<T>& x, const UpsampleBlock<T>& block, nn::Phase phase) {
    if (x.rank() != 4 || x.size(1) != block.conv.weight.size(0)) {
        throw ConfigError("upsample block expects " + std::to_string(block.conv.weight.size(0)) +
                          " channels, got input " + shape_str(x.shape()));
    }
    return leaky_relu(block.bn.forward(block.conv.forward(x), phase), static_cast<T>(nn::kLeakySlope));
}

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(seed);
    const std::size_t d = config.embed_dim;
    patch_proj = nn::Linear<T>(config.patch_dim(), d, rng);
    pos_embedding = nn::Embedding<T>(config.num_patches(), d, rng);
    const nn::EncoderConfig enc{d, config.num_heads, config.mlp_ratio, config.activation};
    for (std::size_t i = 0; i < config.num_layers; ++i) encoder.emplace_back(enc, rng);
    encoder_norm = nn::LayerNorm<T>(d);
    bridge = nn::Conv2d<T>(d, config.residual_channels, 1, 1, 0, rng, true);
    for (std::size_t i = 0; i < config.num_residual_blocks; ++i) residual.emplace_back(config.residual_channels, rng);
    std::size_t channels = config.residual_channels;
    for (std::size_t i = 0; i < config.num_upsample_blocks(); ++i) {
        upsample.emplace_back(channels, channels / 2, rng);
        channels /= 2;
    }
    head = nn::Conv2d<T>(channels, config.out_channels, 3, 1, 1, rng, true);
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& img, nn::Phase phase) const {
    if (img.rank() != 4 || img.size(1) != config.in_channels || img.size(2) != config.image_size ||
        img.size(3) != config.image_size) {
        throw DimensionError("generator expects [b, " + std::to_string(config.in_channels) + ", " +
                             std::to_string(config.image_size) + ", " + std::to_string(config.image_size) +
                             "], got " + shape_str(img.shape()));
    }
    const std::size_t b = img.size(0), g = config.grid();
    Tensor<T> tokens = embed_patches(extract_patches(img, config.patch_size), patch_proj, pos_embedding);
    for (const auto& layer : encoder) tokens = layer.forward(tokens);
    tokens = encoder_norm.forward(tokens);

    // [b, n, d] -> [b, d, grid, grid]; token i sits at grid cell (i / g, i % g).
    Tensor<T> x = reshape(transpose(tokens, 1, 2), {b, config.embed_dim, g, g});
    x = bridge.forward(x);
    for (const auto& block : residual) x = residual_block(x, block, phase);
    for (const auto& block : upsample) x = upsample_block(x, block, phase);
    return tanh(head.forward(x));
}

template <typename T>
nn::NamedTensors<T> Generator<T>::parameters() const {
    nn::NamedTensors<T> out;
    patch_proj.parameters("patch_proj", out);
    pos_embedding.parameters("pos_embedding", out);
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].parameters("encoder." + std::to_string(i), out);
    encoder_norm.parameters("encoder_norm", out);
    bridge.parameters("bridge", out);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i].parameters("residual." + std::to_string(i), out);
    for (std::size_t i = 0; i < upsample.size(); ++i) upsample[i].parameters("upsample." + std::to_string(i), out);
    head.parameters("head", out);
    return out;
}

template <typename T>
nn::NamedTensors<T> Generator<T>::buffers() const {
    nn::NamedTensors<T> out;
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i].buffers("residual." + std::to_string(i), out);
    for (std::size_t i = 0; i < upsample.size(); ++i) upsample[i].buffers("upsample." + std::to_string(i), out);
    return out;
}

#define VITGAN_INSTANTIATE_GENERATOR(T)                                                                   \
    template Tensor<T> extract_patches(const Tensor<T>&, std::size_t);                                    \
    template Tensor<T> assemble_patches(const Tensor<T>&, std::size_t, std::size_t);                      \
    template Tensor<T> embed_patches(const Tensor<T>&, const nn::Linear<T>&, const nn::Embedding<T>&);    \
    template struct ResidualBlock<T>;                                                                     \
    template Tensor<T> residual_block(const Tensor<T>&, const ResidualBlock<T>&, nn::Phase);              \
    template struct UpsampleBlock<T>;                                                                     \
    template Tensor<T> upsample_block(const Tensor<T>&, const UpsampleBlock<T>&, nn::Phase);              \
    template struct Generator<T>;

VITGAN_INSTANTIATE_GENERATOR(float)
VITGAN_INSTANTIATE_GENERATOR(double)

}  // namespace vitgan
