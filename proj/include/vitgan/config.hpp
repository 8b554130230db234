#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "vitgan/dataset.hpp"
#include "vitgan/discriminator.hpp"
#include "vitgan/generator.hpp"
#include "vitgan/metrics.hpp"
#include "vitgan/training.hpp"

namespace vitgan {

struct SyntheticDataConfig {
    SyntheticTaskSpec spec;
    std::size_t count = 64;
    std::uint64_t index_offset = 0;
    /// False when the file left `seed` out; the task seed then follows the
    /// experiment seed, including a --seed override.
    bool explicit_seed = false;
};

/// Exactly one of `directory` and `synthetic` is set after loading.
struct DataConfig {
    std::optional<std::filesystem::path> directory;
    std::optional<SyntheticDataConfig> synthetic;
};

enum class FeatureProviderKind { raw_pixels, embedding_file };

struct EvalConfig {
    FeatureProviderKind provider = FeatureProviderKind::raw_pixels;
    std::size_t raw_grid = 8;
    std::filesystem::path embedding_file;
    std::size_t embedding_dim = 0;
    std::size_t histogram_bins = 10;
    std::size_t is_splits = 1;
    std::optional<DataConfig> data;  // defaults to the training data
};

/// A whole run. Discriminator image size and channel counts are derived
/// from the generator and are not keys of their own.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "run";
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    TrainConfig train;
    std::string metrics_file = "metrics.csv";
    DataConfig data;
    EvalConfig eval;

    /// Copies seed and derived sizes into the sub-configs.
    void sync();
    /// ConfigError naming the offending key.
    void validate() const;

    void set_seed(std::uint64_t s);
};

/// YAML text to config. Relative paths are resolved against `base_dir`.
/// Unknown keys and type errors raise ConfigError with the key path.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
/// IoError if the file cannot be read.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Defaults only: synthetic seg_maps data.
ExperimentConfig default_experiment_config();

std::unique_ptr<PairedDataset> make_dataset(const DataConfig& data);
std::unique_ptr<FeatureProvider> make_feature_provider(const EvalConfig& eval);

const char* to_string(FeatureProviderKind kind);
const char* to_string(DiscriminatorVariant variant);
const char* to_string(nn::Activation activation);

}  // namespace vitgan
