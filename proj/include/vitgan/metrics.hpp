#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vitgan/dataset.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan {

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 2.0;  // images live in [-1, 1]
};

/// Mean SSIM over every fully contained window, averaged over channels.
/// Accepts [h, w] or [c, h, w]. DimensionError on a shape mismatch or an
/// image smaller than the window.
template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimOptions& options = {});

/// Mean |4-neighbour Laplacian| over interior pixels of [.., h, w].
template <typename T>
double mean_abs_laplacian(const Tensor<T>& images);

struct GaussianStats {
    std::size_t dim = 0;
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major
};

/// Sample mean and unbiased covariance. ContractError with fewer than 2
/// rows; DimensionError on ragged rows.
GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// root is taken from the eigenvalues of S_a^(1/2) S_b S_a^(1/2), with
/// negative eigenvalues clipped to zero.
double fid(const GaussianStats& a, const GaussianStats& b);

struct InceptionScore {
    double mean = 0;
    double stddev = 0;  // across splits; 0 with one split
};

/// exp(mean KL(p(y|x) || p(y))) per split. ContractError if a row is
/// negative or does not sum to 1 within 1e-6, or splits do not divide rows.
InceptionScore inception_score(const std::vector<std::vector<double>>& probs, std::size_t splits = 1);

/// Image -> fixed-length feature vector. `key` identifies the image for
/// providers backed by precomputed data.
class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual std::string name() const = 0;
    virtual std::vector<double> features(const Tensor<float>& chw, const std::string& key) const = 0;
};

/// Channel-mean greyscale, area-averaged onto a grid x grid lattice.
class RawPixelProvider final : public FeatureProvider {
public:
    explicit RawPixelProvider(std::size_t grid = 8);
    std::size_t dim() const override { return grid_ * grid_; }
    std::string name() const override { return "raw_pixels"; }
    std::vector<double> features(const Tensor<float>& chw, const std::string& key) const override;

private:
    std::size_t grid_;
};

/// Precomputed embeddings: records of (u32 id length, id bytes, dim x f32),
/// little-endian. Lookup by key; IoError for unknown keys.
class EmbeddingFileProvider final : public FeatureProvider {
public:
    EmbeddingFileProvider(const std::filesystem::path& path, std::size_t dim);
    std::size_t dim() const override { return dim_; }
    std::string name() const override { return "embedding_file"; }
    std::vector<double> features(const Tensor<float>& chw, const std::string& key) const override;
    std::size_t size() const { return table_.size(); }

private:
    std::size_t dim_;
    std::map<std::string, std::vector<double>> table_;
};

void write_embedding_file(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::vector<float>>>& records);

/// Image -> class distribution, for the inception score.
class ClassProbabilityProvider {
public:
    virtual ~ClassProbabilityProvider() = default;
    virtual std::size_t num_classes() const = 0;
    virtual std::vector<double> probabilities(const Tensor<float>& chw) const = 0;
};

/// Normalised histogram of channel-mean intensity over `bins` equal bins.
class IntensityHistogramProvider final : public ClassProbabilityProvider {
public:
    explicit IntensityHistogramProvider(std::size_t bins = 10);
    std::size_t num_classes() const override { return bins_; }
    std::vector<double> probabilities(const Tensor<float>& chw) const override;

private:
    std::size_t bins_;
};

/// Keys used when asking a FeatureProvider for real and generated features.
std::string real_feature_key(const std::string& id);
std::string generated_feature_key(const std::string& id);

/// Produces the model output [c, h, w] for one sample.
using ImageModel = std::function<Tensor<float>(const PairedSample&)>;

struct EvalReport {
    double fid = 0;
    double is = 0;
    double is_std = 0;
    double ssim = 0;
    std::size_t count = 0;
    std::string provider;
};

/// FID between provider features of targets and outputs, IS of the outputs,
/// mean SSIM(output, target). ContractError on fewer than 2 samples.
EvalReport evaluate_model(const ImageModel& model, const PairedDataset& dataset, const FeatureProvider& features,
                          const ClassProbabilityProvider& classes, std::size_t is_splits = 1);

/// Published reference row, reproduced only as a footer.
struct ReferenceRow {
    double fid = 939;
    double is = 1.281;
    double ssim = 0.46;
};
inline constexpr ReferenceRow kReferenceRow{};

/// Aligned FID | IS | SSIM table with the reference footer.
std::string format_report_table(const EvalReport& report);
/// One key=value per line.
std::string format_report_kv(const EvalReport& report);

}  // namespace vitgan
