#include "vitgan/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>

#include "vitgan/error.hpp"
#include "vitgan/image_io.hpp"

namespace vitgan {

namespace {

struct Planes {
    std::size_t channels, height, width;
};

template <typename T>
Planes planes_of(const Tensor<T>& t, const char* what) {
    if (t.rank() == 2) return {1, t.size(0), t.size(1)};
    if (t.rank() == 3) return {t.size(0), t.size(1), t.size(2)};
    throw DimensionError(std::string(what) + " expects [h, w] or [c, h, w], got " + shape_str(t.shape()));
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double c = (static_cast<double>(size) - 1) / 2;
    double total = 0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        k[i] = std::exp(-d * d / (2 * sigma * sigma));
        total += k[i];
    }
    for (auto& v : k) v /= total;
    return k;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w, const std::vector<double>& k) {
    const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
    std::vector<double> rows(h * ow), out(oh * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) s += k[i] * plane[y * w + x + i];
            rows[y * ow + x] = s;
        }
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

Eigen::MatrixXd to_matrix(const GaussianStats& s) {
    Eigen::MatrixXd m(s.dim, s.dim);
    for (std::size_t i = 0; i < s.dim; ++i)
        for (std::size_t j = 0; j < s.dim; ++j) m(i, j) = s.cov[i * s.dim + j];
    return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimOptions& options) {
    if (x.shape() != y.shape()) throw DimensionError("ssim shape mismatch: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    const Planes p = planes_of(x, "ssim");
    if (p.height < options.window || p.width < options.window) {
        throw DimensionError("ssim needs images of at least " + std::to_string(options.window) + "x" +
                             std::to_string(options.window) + ", got " + shape_str(x.shape()));
    }
    const auto k = gaussian_kernel(options.window, options.sigma);
    const double c1 = (options.k1 * options.data_range) * (options.k1 * options.data_range);
    const double c2 = (options.k2 * options.data_range) * (options.k2 * options.data_range);
    const std::size_t hw = p.height * p.width;
    double total = 0;
    for (std::size_t c = 0; c < p.channels; ++c) {
        std::vector<double> a(hw), b(hw), aa(hw), bb(hw), ab(hw);
        for (std::size_t i = 0; i < hw; ++i) {
            a[i] = static_cast<double>(x.data()[c * hw + i]);
            b[i] = static_cast<double>(y.data()[c * hw + i]);
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        const auto mu_a = filter_valid(a, p.height, p.width, k), mu_b = filter_valid(b, p.height, p.width, k);
        const auto e_aa = filter_valid(aa, p.height, p.width, k), e_bb = filter_valid(bb, p.height, p.width, k);
        const auto e_ab = filter_valid(ab, p.height, p.width, k);
        double sum = 0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i], vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(mu_a.size());
    }
    return total / static_cast<double>(p.channels);
}

template <typename T>
double mean_abs_laplacian(const Tensor<T>& images) {
    if (images.rank() < 2) throw DimensionError("mean_abs_laplacian expects [.., h, w], got " + shape_str(images.shape()));
    const std::size_t h = images.size(-2), w = images.size(-1);
    if (h < 3 || w < 3) throw DimensionError("mean_abs_laplacian needs at least 3x3 planes");
    const std::size_t planes = images.numel() / (h * w);
    const auto d = images.data();
    double total = 0;
    for (std::size_t p = 0; p < planes; ++p) {
        const auto* q = d.data() + p * h * w;
        for (std::size_t i = 1; i + 1 < h; ++i)
            for (std::size_t j = 1; j + 1 < w; ++j) {
                const double lap = static_cast<double>(q[(i - 1) * w + j]) + q[(i + 1) * w + j] + q[i * w + j - 1] +
                                   q[i * w + j + 1] - 4.0 * q[i * w + j];
                total += std::abs(lap);
            }
    }
    return total / static_cast<double>(planes * (h - 2) * (w - 2));
}

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2) {
        throw ContractError("feature statistics need at least 2 samples, got " + std::to_string(features.size()));
    }
    GaussianStats s;
    s.dim = features[0].size();
    const std::size_t n = features.size();
    Eigen::MatrixXd x(n, s.dim);
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != s.dim) {
            throw DimensionError("feature row " + std::to_string(i) + " has " + std::to_string(features[i].size()) +
                                 " values, expected " + std::to_string(s.dim));
        }
        for (std::size_t j = 0; j < s.dim; ++j) x(i, j) = features[i][j];
    }
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centred = x.rowwise() - mu;
    const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
    s.mean.assign(mu.data(), mu.data() + s.dim);
    s.cov.resize(s.dim * s.dim);
    for (std::size_t i = 0; i < s.dim; ++i)
        for (std::size_t j = 0; j < s.dim; ++j) s.cov[i * s.dim + j] = 0.5 * (cov(i, j) + cov(j, i));
    return s;
}

double fid(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim != b.dim) throw DimensionError("fid dimension mismatch: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
    double mean_term = 0;
    for (std::size_t i = 0; i < a.dim; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    const Eigen::MatrixXd sa = to_matrix(a), sb = to_matrix(b);
    const Eigen::MatrixXd root_a = psd_sqrt(sa);
    const Eigen::MatrixXd inner = root_a * sb * root_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const double trace_root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double value = mean_term + sa.trace() + sb.trace() - 2 * trace_root;
    if (!std::isfinite(value)) throw NumericError("fid is not finite");
    return std::max(value, 0.0);
}

InceptionScore inception_score(const std::vector<std::vector<double>>& probs, std::size_t splits) {
    if (probs.empty()) throw ContractError("inception score of an empty set");
    if (splits == 0 || probs.size() % splits != 0) {
        throw ContractError(std::to_string(splits) + " splits do not divide " + std::to_string(probs.size()) + " rows");
    }
    const std::size_t k = probs[0].size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != k) throw DimensionError("probability row " + std::to_string(i) + " has the wrong length");
        double total = 0;
        for (double p : probs[i]) {
            if (!(p >= 0)) throw ContractError("probability row " + std::to_string(i) + " has a negative entry");
            total += p;
        }
        if (std::abs(total - 1) > 1e-6) throw ContractError("probability row " + std::to_string(i) + " sums to " + std::to_string(total));
    }
    const std::size_t per = probs.size() / splits;
    std::vector<double> scores;
    for (std::size_t s = 0; s < splits; ++s) {
        // Column sums instead of the normalised marginal keep p / m exact for one-hot rows.
        std::vector<double> column(k, 0.0);
        for (std::size_t i = s * per; i < (s + 1) * per; ++i)
            for (std::size_t j = 0; j < k; ++j) column[j] += probs[i][j];
        double kl = 0, carry = 0;  // Neumaier summation
        for (std::size_t i = s * per; i < (s + 1) * per; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double p = probs[i][j];
                if (p <= 0) continue;
                const double term = p * std::log(p * static_cast<double>(per) / column[j]);
                const double t = kl + term;
                carry += std::abs(kl) >= std::abs(term) ? (kl - t) + term : (term - t) + kl;
                kl = t;
            }
        scores.push_back(std::exp((kl + carry) / static_cast<double>(per)));
    }
    InceptionScore out;
    for (double v : scores) out.mean += v;
    out.mean /= static_cast<double>(splits);
    for (double v : scores) out.stddev += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(out.stddev / static_cast<double>(splits));
    return out;
}

RawPixelProvider::RawPixelProvider(std::size_t grid) : grid_(grid) {
    if (grid == 0) throw ConfigError("raw pixel grid must be positive");
}

std::vector<double> RawPixelProvider::features(const Tensor<float>& chw, const std::string&) const {
    const Planes p = planes_of(chw, "raw pixel features");
    if (p.height < grid_ || p.width < grid_) throw DimensionError("image " + shape_str(chw.shape()) + " is smaller than the feature grid");
    const std::size_t hw = p.height * p.width;
    std::vector<double> out(grid_ * grid_, 0.0);
    for (std::size_t gy = 0; gy < grid_; ++gy)
        for (std::size_t gx = 0; gx < grid_; ++gx) {
            const std::size_t y0 = gy * p.height / grid_, y1 = (gy + 1) * p.height / grid_;
            const std::size_t x0 = gx * p.width / grid_, x1 = (gx + 1) * p.width / grid_;
            double sum = 0;
            for (std::size_t c = 0; c < p.channels; ++c)
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x) sum += chw.data()[c * hw + y * p.width + x];
            out[gy * grid_ + gx] = sum / static_cast<double>(p.channels * (y1 - y0) * (x1 - x0));
        }
    return out;
}

EmbeddingFileProvider::EmbeddingFileProvider(const std::filesystem::path& path, std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
    const auto bytes = read_file(path);
    std::size_t pos = 0;
    auto u32 = [&]() {
        if (bytes.size() - pos < 4) throw IoError(path.string() + ": truncated embedding record");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    };
    while (pos < bytes.size()) {
        const std::uint32_t len = u32();
        if (bytes.size() - pos < len) throw IoError(path.string() + ": truncated embedding id");
        std::string id(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + len));
        pos += len;
        std::vector<double> v(dim);
        for (auto& x : v) x = static_cast<double>(std::bit_cast<float>(u32()));
        if (!table_.emplace(id, std::move(v)).second) throw IoError(path.string() + ": duplicate embedding id '" + id + "'");
    }
}

std::vector<double> EmbeddingFileProvider::features(const Tensor<float>&, const std::string& key) const {
    auto it = table_.find(key);
    if (it == table_.end()) throw IoError("no precomputed embedding for '" + key + "'");
    return it->second;
}

void write_embedding_file(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::vector<float>>>& records) {
    std::vector<std::uint8_t> out;
    auto put = [&out](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    for (const auto& [id, values] : records) {
        put(static_cast<std::uint32_t>(id.size()));
        out.insert(out.end(), id.begin(), id.end());
        for (float v : values) put(std::bit_cast<std::uint32_t>(v));
    }
    write_file(path, out);
}

IntensityHistogramProvider::IntensityHistogramProvider(std::size_t bins) : bins_(bins) {
    if (bins < 2) throw ConfigError("histogram provider needs at least 2 bins");
}

std::vector<double> IntensityHistogramProvider::probabilities(const Tensor<float>& chw) const {
    const Planes p = planes_of(chw, "histogram");
    const std::size_t hw = p.height * p.width;
    std::vector<double> hist(bins_, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        double v = 0;
        for (std::size_t c = 0; c < p.channels; ++c) v += chw.data()[c * hw + i];
        v = std::clamp((v / static_cast<double>(p.channels) + 1) / 2, 0.0, 1.0);
        hist[std::min(bins_ - 1, static_cast<std::size_t>(v * static_cast<double>(bins_)))] += 1;
    }
    for (auto& h : hist) h /= static_cast<double>(hw);
    return hist;
}

std::string real_feature_key(const std::string& id) { return id; }
std::string generated_feature_key(const std::string& id) { return id + ".output"; }

EvalReport evaluate_model(const ImageModel& model, const PairedDataset& dataset, const FeatureProvider& features,
                          const ClassProbabilityProvider& classes, std::size_t is_splits) {
    const std::size_t n = dataset.size();
    if (n < 2) throw ContractError("evaluation needs at least 2 samples, got " + std::to_string(n));
    std::vector<std::vector<double>> real, fake, probs;
    double ssim_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const PairedSample sample = dataset.get(i);
        const Tensor<float> output = model(sample);
        if (output.shape() != sample.target.shape()) {
            throw DimensionError("model output " + shape_str(output.shape()) + " does not match target " +
                                 shape_str(sample.target.shape()) + " for '" + sample.id + "'");
        }
        real.push_back(features.features(sample.target, real_feature_key(sample.id)));
        fake.push_back(features.features(output, generated_feature_key(sample.id)));
        probs.push_back(classes.probabilities(output));
        ssim_total += ssim(output, sample.target);
    }
    EvalReport r;
    r.count = n;
    r.provider = features.name();
    r.fid = fid(gaussian_stats(real), gaussian_stats(fake));
    const auto is = inception_score(probs, is_splits);
    r.is = is.mean;
    r.is_std = is.stddev;
    r.ssim = ssim_total / static_cast<double>(n);
    return r;
}

std::string format_report_table(const EvalReport& r) {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof line, "%-24s %12s %10s %8s\n", "model", "FID", "IS", "SSIM");
    out += line;
    std::snprintf(line, sizeof line, "%-24s %12.4f %10.4f %8.4f\n", "this model", r.fid, r.is, r.ssim);
    out += line;
    out += "\n";
    out += "reference (published figures; other data and features, not comparable)\n";
    std::snprintf(line, sizeof line, "%-24s %12g %10g %8g\n", "reference row", kReferenceRow.fid, kReferenceRow.is,
                  kReferenceRow.ssim);
    out += line;
    std::snprintf(line, sizeof line, "samples=%zu provider=%s\n", r.count, r.provider.c_str());
    out += line;
    return out;
}

std::string format_report_kv(const EvalReport& r) {
    std::string out;
    out += "fid=" + fmt("%.9g", r.fid) + "\n";
    out += "is=" + fmt("%.9g", r.is) + "\n";
    out += "is_std=" + fmt("%.9g", r.is_std) + "\n";
    out += "ssim=" + fmt("%.9g", r.ssim) + "\n";
    out += "samples=" + std::to_string(r.count) + "\n";
    out += "provider=" + r.provider + "\n";
    out += "reference.fid=" + fmt("%g", kReferenceRow.fid) + "\n";
    out += "reference.is=" + fmt("%g", kReferenceRow.is) + "\n";
    out += "reference.ssim=" + fmt("%g", kReferenceRow.ssim) + "\n";
    return out;
}

template double ssim(const Tensor<float>&, const Tensor<float>&, const SsimOptions&);
template double ssim(const Tensor<double>&, const Tensor<double>&, const SsimOptions&);
template double mean_abs_laplacian(const Tensor<float>&);
template double mean_abs_laplacian(const Tensor<double>&);

}  // namespace vitgan
