#include "vitgan/training.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "vitgan/checkpoint.hpp"
#include "vitgan/error.hpp"
#include "vitgan/ops.hpp"
#include "vitgan/random.hpp"

namespace vitgan {

const char* to_string(TrainMode mode) { return mode == TrainMode::cgan_l1 ? "cgan_l1" : "l1_only"; }

TrainMode parse_train_mode(const std::string& name) {
    if (name == "cgan_l1") return TrainMode::cgan_l1;
    if (name == "l1_only") return TrainMode::l1_only;
    throw ConfigError("unknown training mode '" + name + "' (expected cgan_l1 or l1_only)");
}

void TrainConfig::validate() const {
    if (!(lambda_l1 >= 0) || !std::isfinite(lambda_l1)) throw ConfigError("lambda_l1 must be finite and >= 0");
    if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("adam eps must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& output, const Tensor<T>& target) {
    if (output.shape() != target.shape()) {
        throw DimensionError("l1_loss shape mismatch: " + shape_str(output.shape()) + " vs " + shape_str(target.shape()));
    }
    const auto o = output.data(), t = target.data();
    const std::size_t n = o.size();
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += std::abs(static_cast<double>(o[i]) - static_cast<double>(t[i]));
    const T value = static_cast<T>(total / static_cast<double>(n));
    return record_op<T>(Tensor<T>::scalar(value), {output, target}, [output, target, n](std::span<const T> g) {
        const T share = g[0] / static_cast<T>(n);
        const auto o = output.data(), t = target.data();
        auto sign = [](T d) { return d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0}); };
        if (output.requires_grad()) {
            auto go = output.grad_accumulator();
            for (std::size_t i = 0; i < n; ++i) go[i] += share * sign(o[i] - t[i]);
        }
        if (target.requires_grad()) {
            auto gt = target.grad_accumulator();
            for (std::size_t i = 0; i < n; ++i) gt[i] -= share * sign(o[i] - t[i]);
        }
    });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, T label) {
    const auto z = logits.data();
    const std::size_t n = z.size();
    if (n == 0) throw DimensionError("bce_with_logits on an empty tensor");
    double total = 0;
    for (T v : z) {
        const double x = static_cast<double>(v);
        total += std::max(x, 0.0) - x * static_cast<double>(label) + std::log1p(std::exp(-std::abs(x)));
    }
    const T value = static_cast<T>(total / static_cast<double>(n));
    return record_op<T>(Tensor<T>::scalar(value), {logits}, [logits, label, n](std::span<const T> g) {
        if (!logits.requires_grad()) return;
        const T share = g[0] / static_cast<T>(n);
        const auto z = logits.data();
        auto gz = logits.grad_accumulator();
        for (std::size_t i = 0; i < n; ++i) {
            const T s = z[i] >= 0 ? T{1} / (T{1} + std::exp(-z[i])) : std::exp(z[i]) / (T{1} + std::exp(z[i]));
            gz[i] += share * (s - label);
        }
    });
}

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
    if (real_logits.shape() != fake_logits.shape()) {
        throw DimensionError("gan_losses logit maps differ: " + shape_str(real_logits.shape()) + " vs " +
                             shape_str(fake_logits.shape()));
    }
    Tensor<T> d = scale(add(bce_with_logits(real_logits, T{1}), bce_with_logits(fake_logits, T{0})), T{0.5});
    return {d, bce_with_logits(fake_logits, T{1})};
}

template <typename T>
Adam<T>::Adam(nn::NamedTensors<T> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    for (const auto& [name, p] : params_) {
        m_.emplace_back(name, Tensor<T>::zeros(p.shape()));
        v_.emplace_back(name, Tensor<T>::zeros(p.shape()));
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(static_cast<double>(options_.beta1), static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(static_cast<double>(options_.beta2), static_cast<double>(t_));
    const T b1 = options_.beta1, b2 = options_.beta2, eps = options_.eps;
    const T step_size = static_cast<T>(options_.lr / c1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor<T>& p = params_[k].second;
        if (!p.has_grad()) {
            // Zero gradient still decays the moments.
            for (auto& m : m_[k].second.mutable_data()) m *= b1;
            for (auto& v : v_[k].second.mutable_data()) v *= b2;
        } else {
            const auto g = p.grad();
            auto m = m_[k].second.mutable_data();
            auto v = v_[k].second.mutable_data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                m[i] = b1 * m[i] + (T{1} - b1) * g[i];
                v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            }
        }
        const auto m = m_[k].second.data();
        const auto v = v_[k].second.data();
        auto w = p.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

std::uint64_t generator_seed(std::uint64_t seed) { return mix_seed(seed, 1); }
std::uint64_t discriminator_seed(std::uint64_t seed) { return mix_seed(seed, 2); }
std::uint64_t batch_seed(std::uint64_t seed) { return mix_seed(seed, 3); }

namespace {

std::optional<Discriminator<float>> make_discriminator(const DiscriminatorConfig& cfg, const TrainConfig& train) {
    if (train.mode == TrainMode::l1_only) return std::nullopt;
    return Discriminator<float>(cfg, discriminator_seed(train.seed));
}

AdamOptions adam_options(const TrainConfig& c, float lr) { return {lr, c.beta1, c.beta2, c.eps}; }

float max_abs_grad(const nn::NamedTensors<float>& params) {
    float worst = 0;
    for (const auto& [name, p] : params)
        for (float g : p.grad()) worst = std::max(worst, std::abs(g));
    return worst;
}

void require_finite(float v, const char* what, std::uint64_t step) {
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + what, static_cast<long long>(step));
}

}  // namespace

TrainState::TrainState(const GeneratorConfig& gen, const DiscriminatorConfig& disc, const TrainConfig& train)
    : gen_config(gen),
      disc_config(disc),
      config(train),
      generator((train.validate(), gen), generator_seed(train.seed)),
      discriminator(make_discriminator(disc, train)),
      opt_g(generator.parameters(), adam_options(train, train.lr_g)) {
    if (discriminator) opt_d.emplace(discriminator->parameters(), adam_options(train, train.lr_d));
}

StepMetrics train_step(TrainState& state, const Batch& batch) {
    StepMetrics metrics;
    metrics.step = state.step;
    const bool adversarial = state.config.mode == TrainMode::cgan_l1;
    const float lambda = state.config.lambda_l1;
    try {
        Tape<float> tape_g;
        Tape<float>::Scope scope_g(tape_g);
        state.opt_g.zero_grad();
        const Tensor<float> fake = state.generator.forward(batch.input, nn::Phase::train);

        if (adversarial) {
            auto& disc = *state.discriminator;
            Tape<float> tape_d;
            Tape<float>::Scope scope_d(tape_d);
            const auto real_map = disc.discriminate(batch.input, batch.target, nn::Phase::train);
            const auto fake_map = disc.discriminate(batch.input, fake.detach(), nn::Phase::train);
            const auto losses = gan_losses(real_map.logits, fake_map.logits);
            metrics.d_loss = losses.d_loss.item();
            require_finite(metrics.d_loss, "d_loss", state.step);
            state.opt_d->zero_grad();
            backward(losses.d_loss, tape_d);
            metrics.d_step_gen_grad_max = max_abs_grad(state.opt_g.params());
            state.opt_d->step();
        }

        Tensor<float> g_l1 = l1_loss(fake, batch.target);
        Tensor<float> g_total = scale(g_l1, lambda);
        if (adversarial) {
            const auto fake_map = state.discriminator->discriminate(batch.input, fake, nn::Phase::train);
            const Tensor<float> g_adv = bce_with_logits(fake_map.logits, 1.0f);
            metrics.g_adv = g_adv.item();
            g_total = add(g_adv, g_total);
        }
        metrics.g_l1 = g_l1.item();
        metrics.g_total = g_total.item();
        require_finite(metrics.g_adv, "g_adv", state.step);
        require_finite(metrics.g_l1, "g_l1", state.step);
        require_finite(metrics.g_total, "g_total", state.step);
        backward(g_total, tape_g);
        state.opt_g.step();
    } catch (const NumericError& e) {
        throw TrainingError(e.what(), static_cast<long long>(state.step));
    }
    ++state.step;
    return metrics;
}

std::string format_metrics_line(const StepMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g", static_cast<unsigned long long>(m.step),
                  static_cast<double>(m.d_loss), static_cast<double>(m.g_adv), static_cast<double>(m.g_l1),
                  static_cast<double>(m.g_total));
    return buf;
}

StepMetrics parse_metrics_line(const std::string& line) {
    StepMetrics m;
    unsigned long long step = 0;
    double d = 0, a = 0, l = 0, t = 0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf%c", &step, &d, &a, &l, &t, &tail) != 5) {
        throw IoError("malformed metrics line: '" + line + "'");
    }
    m.step = step;
    m.d_loss = static_cast<float>(d);
    m.g_adv = static_cast<float>(a);
    m.g_l1 = static_cast<float>(l);
    m.g_total = static_cast<float>(t);
    return m;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool append) : path_(path) {
    file_ = std::fopen(path.c_str(), append ? "a" : "w");
    if (!file_) throw IoError("cannot open metrics file " + path.string() + ": " + std::strerror(errno));
}

MetricsWriter::~MetricsWriter() {
    if (file_) std::fclose(file_);
}

void MetricsWriter::write(const StepMetrics& m) {
    const std::string line = format_metrics_line(m) + "\n";
    if (std::fputs(line.c_str(), file_) < 0 || std::fflush(file_) != 0) throw IoError("write failed: " + path_.string());
}

std::string periodic_checkpoint_name(std::uint64_t completed_steps) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "step_%08llu.vitg", static_cast<unsigned long long>(completed_steps));
    return buf;
}

void run_training(TrainState& state, const PairedDataset& dataset, const TrainRunOptions& options) {
    const Batcher batcher(dataset, state.config.batch_size, batch_seed(state.config.seed));
    std::optional<MetricsWriter> writer;
    if (!options.metrics_path.empty()) writer.emplace(options.metrics_path, options.append_metrics);
    if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);
    const std::size_t every = state.config.checkpoint_every;
    while (state.step < state.config.total_steps) {
        const StepMetrics m = train_step(state, batcher.batch_at(state.step));
        if (writer) writer->write(m);
        if (!options.checkpoint_dir.empty() && every > 0 && state.step % every == 0) {
            save_checkpoint(state, options.checkpoint_dir / periodic_checkpoint_name(state.step));
        }
        if (options.on_step && !options.on_step(m)) break;
    }
    if (!options.checkpoint_dir.empty()) save_checkpoint(state, options.checkpoint_dir / kFinalCheckpointName);
}

#define VITGAN_INSTANTIATE_TRAINING(T)                                          \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> bce_with_logits(const Tensor<T>&, T);                    \
    template GanLosses<T> gan_losses(const Tensor<T>&, const Tensor<T>&);

VITGAN_INSTANTIATE_TRAINING(float)
VITGAN_INSTANTIATE_TRAINING(double)

}  // namespace vitgan
