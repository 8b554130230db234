#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "vitgan/dataset.hpp"
#include "vitgan/error.hpp"
#include "vitgan/metrics.hpp"

using namespace vitgan;
using namespace vitgan::testing;

namespace {

std::vector<double> as_vec(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

GaussianStats diagonal_stats(const std::vector<double>& mean, const std::vector<double>& diag) {
    GaussianStats s;
    s.dim = mean.size();
    s.mean = mean;
    s.cov.assign(s.dim * s.dim, 0.0);
    for (std::size_t i = 0; i < s.dim; ++i) s.cov[i * s.dim + i] = diag[i];
    return s;
}

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows)
        for (auto& v : r) v = rng.normal();
    return rows;
}

std::vector<std::vector<double>> random_probs(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(k));
    for (auto& r : rows) {
        double total = 0;
        for (auto& v : r) total += (v = rng.uniform(0.01, 1.0));
        for (auto& v : r) v /= total;
    }
    return rows;
}

}  // namespace

// ---------------------------------------------------------------- ssim

TEST(Ssim, IdenticalImagesGiveOne) {
    Rng rng(1);
    for (Shape s : {Shape{16, 16}, Shape{3, 20, 13}}) {
        auto x = random_tensor<double>(s, rng, -1, 1);
        EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);
    }
}

TEST(Ssim, ConstantImagesReduceToLuminance) {
    const double a = 0.3, b = -0.5, c1 = (0.01 * 2) * (0.01 * 2);
    const auto x = Tensor<double>::full({12, 12}, a), y = Tensor<double>::full({12, 12}, b);
    EXPECT_NEAR(ssim(x, y), (2 * a * b + c1) / (a * a + b * b + c1), 1e-12);
}

TEST(Ssim, MatchesWindowedOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 3; ++trial) {
        auto x = random_tensor<double>({32, 32}, rng, -1, 1);
        auto y = random_tensor<double>({32, 32}, rng, -1, 1);
        // Correlate y with x so the structure term is exercised away from zero.
        for (std::size_t i = 0; i < y.numel(); ++i) y.mutable_data()[i] = 0.6 * x.data()[i] + 0.4 * y.data()[i];
        EXPECT_NEAR(ssim(x, y), oracle::ssim_channel(as_vec(x), as_vec(y), 32, 32, 2.0), 1e-7);
    }
}

TEST(Ssim, ChannelMeanMatchesOracle) {
    Rng rng(3);
    auto x = random_tensor<double>({3, 14, 15}, rng, -1, 1);
    auto y = random_tensor<double>({3, 14, 15}, rng, -1, 1);
    double expect = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        const auto xv = as_vec(x), yv = as_vec(y);
        const oracle::Vec xc(xv.begin() + c * 210, xv.begin() + (c + 1) * 210), yc(yv.begin() + c * 210, yv.begin() + (c + 1) * 210);
        expect += oracle::ssim_channel(xc, yc, 14, 15, 2.0) / 3;
    }
    EXPECT_NEAR(ssim(x, y), expect, 1e-7);
}

TEST(Ssim, SymmetricAndBounded) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_tensor<double>({16, 16}, rng, -1, 1);
        auto y = random_tensor<double>({16, 16}, rng, -1, 1);
        if (trial % 2) for (auto& v : y.mutable_data()) v = -v;
        const double s = ssim(x, y);
        EXPECT_NEAR(s, ssim(y, x), 1e-9);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
    }
    const auto x = Tensor<double>::zeros({3, 16, 16});
    EXPECT_NEAR(ssim(x, Tensor<double>::full({3, 16, 16}, 0.0)), 1.0, 1e-12);
}

TEST(Ssim, ShapeErrors) {
    EXPECT_THROW(ssim(Tensor<double>::zeros({16, 16}), Tensor<double>::zeros({16, 17})), DimensionError);
    EXPECT_THROW(ssim(Tensor<double>::zeros({10, 16}), Tensor<double>::zeros({10, 16})), DimensionError);
    EXPECT_THROW(ssim(Tensor<double>::zeros({1, 1, 16, 16}), Tensor<double>::zeros({1, 1, 16, 16})), DimensionError);
}

// ---------------------------------------------------------------- fid

TEST(Fid, IdenticalStatsGiveZero) {
    Rng rng(5);
    const auto s = gaussian_stats(random_rows(40, 6, rng));
    EXPECT_NEAR(fid(s, s), 0.0, 1e-6);
}

TEST(Fid, ShiftedIdentityCovariances) {
    const auto a = diagonal_stats({0, 0, 0}, {1, 1, 1});
    const auto b = diagonal_stats({2 / std::sqrt(2.0), 2 / std::sqrt(2.0), 0}, {1, 1, 1});
    EXPECT_NEAR(fid(a, b), 4.0, 1e-9);
}

TEST(Fid, DiagonalClosedFormMatchesEigenPath) {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> da(8), db(8), mu(8, 0.25);
        double expect = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            da[i] = rng.uniform(0.01, 3);
            db[i] = rng.uniform(0.01, 3);
            expect += (std::sqrt(da[i]) - std::sqrt(db[i])) * (std::sqrt(da[i]) - std::sqrt(db[i]));
        }
        EXPECT_NEAR(fid(diagonal_stats(mu, da), diagonal_stats(mu, db)), expect, 1e-6);
    }
}

TEST(Fid, NonNegativeOnRandomSets) {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const auto a = gaussian_stats(random_rows(30, 5, rng)), b = gaussian_stats(random_rows(30, 5, rng));
        EXPECT_GE(fid(a, b), 0.0);
        EXPECT_NEAR(fid(a, b), fid(b, a), 1e-8);
    }
    // Rank-deficient covariance (fewer samples than dimensions) still works.
    const auto a = gaussian_stats(random_rows(3, 10, rng)), b = gaussian_stats(random_rows(3, 10, rng));
    EXPECT_TRUE(std::isfinite(fid(a, b)));
}

TEST(Fid, DimensionMismatch) {
    EXPECT_THROW(fid(diagonal_stats({0}, {1}), diagonal_stats({0, 0}, {1, 1})), DimensionError);
}

TEST(GaussianStats, UnbiasedCovariance) {
    const auto s = gaussian_stats({{1, 2}, {3, 6}, {5, 4}});
    EXPECT_DOUBLE_EQ(s.mean[0], 3.0);
    EXPECT_DOUBLE_EQ(s.mean[1], 4.0);
    // x deviations -2,0,2 ; y deviations -2,2,0
    EXPECT_DOUBLE_EQ(s.cov[0], 4.0);
    EXPECT_DOUBLE_EQ(s.cov[3], 4.0);
    EXPECT_DOUBLE_EQ(s.cov[1], 2.0);
    EXPECT_DOUBLE_EQ(s.cov[2], 2.0);
    EXPECT_THROW(gaussian_stats({{1, 2}}), ContractError);
    EXPECT_THROW(gaussian_stats({{1, 2}, {1}}), DimensionError);
}

// ---------------------------------------------------------------- inception score

TEST(InceptionScore, IdenticalRowsGiveOne) {
    const std::vector<std::vector<double>> rows(6, {0.2, 0.3, 0.5});
    EXPECT_NEAR(inception_score(rows).mean, 1.0, 1e-12);
}

TEST(InceptionScore, DistinctOneHotRowsGiveClassCount) {
    for (std::size_t n : {2u, 5u, 10u}) {
        std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) rows[i][i] = 1.0;
        EXPECT_DOUBLE_EQ(inception_score(rows).mean, static_cast<double>(n));
    }
}

TEST(InceptionScore, MatchesDoubleLoopOracleAndBounds) {
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto rows = random_probs(12, 7, rng);
        oracle::Vec flat;
        for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
        const double is = inception_score(rows).mean;
        EXPECT_NEAR(is, oracle::inception_score(flat, 12, 7), 1e-9);
        EXPECT_GE(is, 1.0);
        EXPECT_LE(is, 7.0);
    }
}

TEST(InceptionScore, SplitsAndContracts) {
    Rng rng(9);
    const auto rows = random_probs(12, 4, rng);
    const auto one = inception_score(rows, 1), three = inception_score(rows, 3);
    EXPECT_EQ(one.stddev, 0.0);
    EXPECT_GT(three.stddev, 0.0);
    EXPECT_THROW(inception_score(rows, 5), ContractError);
    EXPECT_THROW(inception_score({{0.5, 0.6}}), ContractError);
    EXPECT_THROW(inception_score({{1.5, -0.5}}), ContractError);
    EXPECT_THROW(inception_score({}), ContractError);
}

// ---------------------------------------------------------------- providers

TEST(RawPixelProvider, PoolsGreyscaleBlocks) {
    Tensor<float> img = Tensor<float>::zeros({3, 16, 16});
    // Top-left 2x2 block: channel values 0.3, 0.6, 0.9 -> grey 0.6.
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.mutable_data()[c * 256 + y * 16 + x] = 0.3f * static_cast<float>(c + 1);
    const RawPixelProvider p;
    const auto f = p.features(img, "k");
    ASSERT_EQ(f.size(), 64u);
    EXPECT_EQ(p.dim(), 64u);
    EXPECT_NEAR(f[0], 0.6, 1e-6);
    for (std::size_t i = 1; i < 64; ++i) EXPECT_EQ(f[i], 0.0);
    EXPECT_THROW(p.features(Tensor<float>::zeros({3, 4, 4}), "k"), DimensionError);
}

TEST(EmbeddingFileProvider, ReadsRecordsByKey) {
    const auto path = std::filesystem::temp_directory_path() / ("vitgan_emb_" + std::to_string(::getpid()) + ".bin");
    write_embedding_file(path, {{"a", {1.0f, 2.0f}}, {"a.output", {3.0f, -4.5f}}});
    const EmbeddingFileProvider p(path, 2);
    EXPECT_EQ(p.size(), 2u);
    EXPECT_EQ(p.features({}, "a.output"), (std::vector<double>{3.0, -4.5}));
    EXPECT_THROW(p.features({}, "b"), IoError);
    EXPECT_THROW(EmbeddingFileProvider(path, 3), IoError);  // record length mismatch
    std::filesystem::remove(path);
}

TEST(HistogramProvider, RowsAreDistributions) {
    Rng rng(10);
    const IntensityHistogramProvider p(10);
    auto img = random_tensor<float>({3, 8, 8}, rng, -1, 1);
    const auto probs = p.probabilities(img);
    double total = 0;
    for (double v : probs) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    const auto white = p.probabilities(Tensor<float>::full({1, 4, 4}, 1.0f));
    EXPECT_EQ(white.back(), 1.0);
}

// ---------------------------------------------------------------- evaluate

TEST(EvaluateModel, IdentityStubGivesPerfectScores) {
    SyntheticTaskSpec spec;
    spec.image_size = 32;
    const SyntheticDataset ds(spec, 6);
    const auto r = evaluate_model([](const PairedSample& s) { return s.target; }, ds, RawPixelProvider{},
                                  IntensityHistogramProvider{});
    EXPECT_NEAR(r.fid, 0.0, 1e-6);
    EXPECT_NEAR(r.ssim, 1.0, 1e-9);
    EXPECT_GE(r.is, 1.0);
    EXPECT_EQ(r.count, 6u);
}

TEST(EvaluateModel, SixteenImageSmokeIsFinite) {
    SyntheticTaskSpec spec;
    spec.image_size = 32;
    const SyntheticDataset ds(spec, 16);
    const auto r = evaluate_model([](const PairedSample& s) { return s.input; }, ds, RawPixelProvider{},
                                  IntensityHistogramProvider{}, 4);
    EXPECT_TRUE(std::isfinite(r.fid));
    EXPECT_TRUE(std::isfinite(r.is));
    EXPECT_TRUE(std::isfinite(r.ssim));
    EXPECT_GT(r.fid, 0.0);
    EXPECT_LT(r.ssim, 1.0);
}

TEST(EvaluateModel, Contracts) {
    SyntheticTaskSpec spec;
    spec.image_size = 16;
    const SyntheticDataset one(spec, 1), two(spec, 2);
    auto id = [](const PairedSample& s) { return s.target; };
    EXPECT_THROW(evaluate_model(id, one, RawPixelProvider{}, IntensityHistogramProvider{}), ContractError);
    auto bad = [](const PairedSample&) { return Tensor<float>::zeros({3, 8, 8}); };
    EXPECT_THROW(evaluate_model(bad, two, RawPixelProvider{}, IntensityHistogramProvider{}), DimensionError);
}

TEST(Report, TableAndKeyValues) {
    EvalReport r{12.5, 1.75, 0.0, 0.8125, 16, "raw_pixels"};
    const auto table = format_report_table(r);
    EXPECT_NE(table.find("FID"), std::string::npos);
    EXPECT_LT(table.find("FID"), table.find("IS"));
    EXPECT_LT(table.find("IS"), table.find("SSIM"));
    EXPECT_NE(table.find("939"), std::string::npos);
    EXPECT_NE(table.find("1.281"), std::string::npos);
    EXPECT_NE(table.find("0.46"), std::string::npos);
    EXPECT_NE(table.find("12.5000"), std::string::npos);
    const auto kv = format_report_kv(r);
    EXPECT_NE(kv.find("fid=12.5\n"), std::string::npos);
    EXPECT_NE(kv.find("ssim=0.8125\n"), std::string::npos);
    EXPECT_NE(kv.find("reference.fid=939\n"), std::string::npos);
    EXPECT_NE(kv.find("reference.is=1.281\n"), std::string::npos);
    EXPECT_NE(kv.find("reference.ssim=0.46\n"), std::string::npos);
}

// ---------------------------------------------------------------- laplacian

TEST(Laplacian, FlatAndRampAreZeroCheckerIsLarge) {
    EXPECT_EQ(mean_abs_laplacian(Tensor<double>::full({1, 1, 5, 5}, 0.7)), 0.0);
    Tensor<double> ramp = Tensor<double>::zeros({4, 6});
    for (std::size_t i = 0; i < 24; ++i) ramp.mutable_data()[i] = static_cast<double>(i % 6) * 0.1;
    EXPECT_NEAR(mean_abs_laplacian(ramp), 0.0, 1e-12);
    Tensor<double> checker = Tensor<double>::zeros({4, 4});
    for (std::size_t i = 0; i < 16; ++i) checker.mutable_data()[i] = ((i / 4 + i % 4) % 2) ? 1.0 : -1.0;
    EXPECT_DOUBLE_EQ(mean_abs_laplacian(checker), 8.0);
    EXPECT_THROW(mean_abs_laplacian(Tensor<double>::zeros({2, 2})), DimensionError);
}
