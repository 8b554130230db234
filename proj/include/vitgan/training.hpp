#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "vitgan/dataset.hpp"
#include "vitgan/discriminator.hpp"
#include "vitgan/generator.hpp"
#include "vitgan/nn/layers.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan {

enum class TrainMode { cgan_l1, l1_only };

const char* to_string(TrainMode mode);
/// ConfigError for unknown names.
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
    float lambda_l1 = 100.0f;
    float lr_g = 2e-4f;
    float lr_d = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    std::size_t batch_size = 4;
    std::size_t total_steps = 1000;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::cgan_l1;
    std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints

    void validate() const;
};

/// Mean absolute error. DimensionError on shape mismatch.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& output, const Tensor<T>& target);

/// Mean binary cross-entropy of `logits` against a constant label, using
/// max(z, 0) - z*y + log(1 + exp(-|z|)).
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, T label);

template <typename T>
struct GanLosses {
    Tensor<T> d_loss;  // (BCE(real, 1) + BCE(fake, 0)) / 2
    Tensor<T> g_adv;   // BCE(fake, 1)
};

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& real_logits, const Tensor<T>& fake_logits);

struct AdamOptions {
    float lr = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Adam with bias correction. Moments are named like the parameters they
/// track; a parameter without a gradient is treated as having gradient 0.
template <typename T>
class Adam {
public:
    Adam(nn::NamedTensors<T> params, AdamOptions options);

    void step();
    void zero_grad();

    const nn::NamedTensors<T>& params() const { return params_; }
    const nn::NamedTensors<T>& first_moments() const { return m_; }
    const nn::NamedTensors<T>& second_moments() const { return v_; }
    const AdamOptions& options() const { return options_; }
    std::uint64_t steps_taken() const { return t_; }
    void set_steps_taken(std::uint64_t t) { t_ = t; }

private:
    nn::NamedTensors<T> params_;
    nn::NamedTensors<T> m_, v_;
    AdamOptions options_;
    std::uint64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

/// Generator, optional discriminator, their optimizers and the step
/// counter. All randomness in a run is derived from (seed, step), so this is
/// the complete resumable state. Not copyable: members share storage.
struct TrainState {
    GeneratorConfig gen_config;
    DiscriminatorConfig disc_config;
    TrainConfig config;
    Generator<float> generator;
    std::optional<Discriminator<float>> discriminator;  // absent in l1_only
    Adam<float> opt_g;
    std::optional<Adam<float>> opt_d;
    std::uint64_t step = 0;

    TrainState(const GeneratorConfig& gen, const DiscriminatorConfig& disc, const TrainConfig& train);
    TrainState(const TrainState&) = delete;
    TrainState& operator=(const TrainState&) = delete;
    TrainState(TrainState&&) = default;
};

/// Stream seeds derived from TrainConfig::seed.
std::uint64_t generator_seed(std::uint64_t seed);
std::uint64_t discriminator_seed(std::uint64_t seed);
std::uint64_t batch_seed(std::uint64_t seed);

struct StepMetrics {
    std::uint64_t step = 0;
    float d_loss = 0;
    float g_adv = 0;
    float g_l1 = 0;
    float g_total = 0;
    /// Largest |gradient| any generator parameter held after the D backward
    /// pass. Zero when the fake sample is properly detached.
    float d_step_gen_grad_max = 0;
};

/// One D update (cgan_l1 only) followed by one G update. Advances
/// state.step. TrainingError carrying the step index on a non-finite loss.
StepMetrics train_step(TrainState& state, const Batch& batch);

/// Appends `step,d_loss,g_adv,g_l1,g_total` lines, flushed per line.
class MetricsWriter {
public:
    MetricsWriter(const std::filesystem::path& path, bool append);
    ~MetricsWriter();
    MetricsWriter(const MetricsWriter&) = delete;
    MetricsWriter& operator=(const MetricsWriter&) = delete;

    void write(const StepMetrics& m);

private:
    std::FILE* file_ = nullptr;
    std::filesystem::path path_;
};

std::string format_metrics_line(const StepMetrics& m);
/// Parses one metrics line; IoError if malformed.
StepMetrics parse_metrics_line(const std::string& line);

struct TrainRunOptions {
    std::filesystem::path metrics_path;    // empty: no metrics file
    std::filesystem::path checkpoint_dir;  // empty: no checkpoints
    bool append_metrics = false;
    /// Called after each step; return false to stop early.
    std::function<bool(const StepMetrics&)> on_step;
};

/// Runs steps state.step .. config.total_steps - 1 on the seeded batch
/// schedule. Periodic checkpoints are `step_<n>.vitg` where n counts
/// completed steps; the final one is `final.vitg`.
void run_training(TrainState& state, const PairedDataset& dataset, const TrainRunOptions& options);

inline constexpr const char* kFinalCheckpointName = "final.vitg";
std::string periodic_checkpoint_name(std::uint64_t completed_steps);

}  // namespace vitgan
