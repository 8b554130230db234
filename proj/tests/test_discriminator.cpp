#include <gtest/gtest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "vitgan/discriminator.hpp"
#include "vitgan/error.hpp"
#include "vitgan/ops.hpp"

using namespace vitgan;
using vitgan::testing::GradCheckOptions;
using vitgan::testing::gradcheck;
using vitgan::testing::random_tensor;
using vitgan::testing::weighted_sum;

namespace {

DiscriminatorConfig small_conv(std::size_t image, std::size_t downsamples, std::size_t base = 4) {
    DiscriminatorConfig c;
    c.image_size = image;
    c.num_downsamples = downsamples;
    c.base_channels = base;
    return c;
}

DiscriminatorConfig small_transformer() {
    DiscriminatorConfig c;
    c.variant = DiscriminatorVariant::transformer_patchgan;
    c.image_size = 16;
    c.patch_size = 4;
    c.embed_dim = 8;
    c.num_layers = 1;
    c.num_heads = 2;
    return c;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
    return m;
}

/// Receptive field of output cell (0, 0) along one axis, traced layer by
/// layer: first input index and extent.
struct Field {
    long start = 0;
    long extent = 1;
};

Field trace_field(const Discriminator<float>& d) {
    std::vector<std::pair<std::size_t, std::size_t>> layers;  // (stride, padding) of k=4 convs
    for (const auto& s : d.stages) layers.emplace_back(s.conv.stride, s.conv.padding);
    layers.emplace_back(d.classifier.stride, d.classifier.padding);
    Field f;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        const long stride = static_cast<long>(it->first), pad = static_cast<long>(it->second);
        f.start = f.start * stride - pad;
        f.extent = (f.extent - 1) * stride + 4;
    }
    return f;
}

}  // namespace

TEST(Discriminator, SixtyFourPixelsGiveSixBySix) {
    Discriminator<float> d(DiscriminatorConfig{}, 1);
    EXPECT_EQ(d.config.output_grid(), 6u);
    Rng rng(80);
    auto cond = random_tensor<float>({2, 3, 64, 64}, rng);
    auto cand = random_tensor<float>({2, 3, 64, 64}, rng);
    EXPECT_EQ(d.discriminate(cond, cand, nn::Phase::train).logits.shape(), (Shape{2, 1, 6, 6}));
}

TEST(Discriminator, ReferenceLayout) {
    Discriminator<float> d(DiscriminatorConfig{}, 2);
    ASSERT_EQ(d.stages.size(), 4u);
    const std::size_t widths[4] = {64, 128, 256, 512};
    const std::size_t strides[4] = {2, 2, 2, 1};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(d.stages[i].conv.weight.shape(), (Shape{widths[i], i == 0 ? 6 : widths[i - 1], 4, 4}));
        EXPECT_EQ(d.stages[i].conv.stride, strides[i]);
        EXPECT_EQ(d.stages[i].conv.padding, 1u);
        EXPECT_EQ(d.stages[i].has_norm, i > 0);
    }
    EXPECT_EQ(d.classifier.weight.shape(), (Shape{1, 512, 4, 4}));
    EXPECT_EQ(trace_field(d).extent, 70);
}

TEST(Discriminator, GridMatchesClosedFormForAcceptedConfigs) {
    std::size_t accepted = 0;
    for (std::size_t s = 4; s <= 96; s += 2)
        for (std::size_t depth = 1; depth <= 5; ++depth) {
            auto cfg = small_conv(s, depth, 1);
            // closed form: s / 2^depth - 2, defined when 2^depth divides s
            const std::size_t scale = std::size_t{1} << depth;
            const bool expect_ok = s % scale == 0 && s / scale > 2;
            bool ok = true;
            try {
                cfg.validate();
            } catch (const ConfigError&) {
                ok = false;
            }
            ASSERT_EQ(ok, expect_ok) << s << " px, " << depth << " downsamples";
            if (!ok) continue;
            ++accepted;
            EXPECT_EQ(cfg.output_grid(), s / scale - 2);
            Discriminator<float> d(cfg, 3);
            auto x = Tensor<float>::zeros({1, 3, s, s});
            auto logits = d.discriminate(x, x, nn::Phase::eval).logits;
            EXPECT_EQ(logits.shape(), (Shape{1, 1, s / scale - 2, s / scale - 2}));
        }
    EXPECT_GT(accepted, 20u);
}

TEST(Discriminator, RejectsEmptyGrid) {
    EXPECT_THROW(small_conv(16, 3).validate(), ConfigError);
    EXPECT_THROW((Discriminator<float>(small_conv(8, 2), 4)), ConfigError);
}

TEST(Discriminator, SpatialMismatchIsDimensionError) {
    Discriminator<float> d(small_conv(16, 2), 5);
    EXPECT_THROW(d.discriminate(Tensor<float>::zeros({1, 3, 16, 16}), Tensor<float>::zeros({1, 3, 16, 8}),
                                nn::Phase::eval),
                 DimensionError);
    EXPECT_THROW(d.discriminate(Tensor<float>::zeros({2, 3, 16, 16}), Tensor<float>::zeros({1, 3, 16, 16}),
                                nn::Phase::eval),
                 DimensionError);
    EXPECT_THROW(d.discriminate(Tensor<float>::zeros({1, 3, 32, 32}), Tensor<float>::zeros({1, 3, 32, 32}),
                                nn::Phase::eval),
                 DimensionError);
}

TEST(Discriminator, CandidateChangesScores) {
    Discriminator<float> d(DiscriminatorConfig{}, 6);
    Rng rng(81);
    auto cond = random_tensor<float>({2, 3, 64, 64}, rng);
    auto a = random_tensor<float>({2, 3, 64, 64}, rng);
    auto b = random_tensor<float>({2, 3, 64, 64}, rng);
    EXPECT_GT(max_abs_diff(d.discriminate(cond, a, nn::Phase::eval).logits,
                           d.discriminate(cond, b, nn::Phase::eval).logits),
              0.0);
}

TEST(Discriminator, ConditionIsWiredIn) {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        Discriminator<float> d(DiscriminatorConfig{}, seed);
        Rng rng(82 + seed);
        auto cand = random_tensor<float>({2, 3, 64, 64}, rng);
        auto c1 = random_tensor<float>({2, 3, 64, 64}, rng);
        auto c2 = random_tensor<float>({2, 3, 64, 64}, rng);
        EXPECT_GT(max_abs_diff(d.discriminate(c1, cand, nn::Phase::train).logits,
                               d.discriminate(c2, cand, nn::Phase::train).logits),
                  0.0);
    }
}

TEST(Discriminator, LogitsAreRawAndFinite) {
    Discriminator<float> d(DiscriminatorConfig{}, 10);
    Rng rng(83);
    auto x = random_tensor<float>({2, 3, 64, 64}, rng);
    auto logits = d.discriminate(x, x, nn::Phase::train).logits;
    bool outside_unit = false;
    for (float v : logits.data()) {
        EXPECT_TRUE(std::isfinite(v));
        outside_unit = outside_unit || v < 0.0f || v > 1.0f;
    }
    EXPECT_TRUE(outside_unit) << "logits look squashed";
}

// Eval mode: training-mode batch norm couples every spatial position
// through the batch statistics.
TEST(Discriminator, CellIgnoresInputOutsideReceptiveField) {
    Discriminator<float> d(DiscriminatorConfig{}, 11);
    const Field f = trace_field(d);
    const long last = f.start + f.extent - 1;  // last input row/col seen by cell (0,0)
    ASSERT_LT(last, 63);
    Rng rng(84);
    auto cond = random_tensor<float>({1, 3, 64, 64}, rng);
    auto cand = random_tensor<float>({1, 3, 64, 64}, rng);
    auto base = d.discriminate(cond, cand, nn::Phase::eval).logits;

    Tensor<float> far = cand.clone();
    auto m = far.mutable_data();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < 64; ++r)
            for (std::size_t col = 0; col < 64; ++col)
                if (static_cast<long>(r) > last || static_cast<long>(col) > last) m[(c * 64 + r) * 64 + col] = 0;
    auto moved = d.discriminate(cond, far, nn::Phase::eval).logits;
    EXPECT_EQ(moved.data()[0], base.data()[0]);
    // the far corner cell does see the change
    EXPECT_NE(moved.data()[35], base.data()[35]);

    Tensor<float> near = cand.clone();
    near.mutable_data()[static_cast<std::size_t>(last)] += 1.0f;  // row 0, column `last`
    EXPECT_NE(d.discriminate(cond, near, nn::Phase::eval).logits.data()[0], base.data()[0]);
}

TEST(Discriminator, GradcheckSingleSampleEval) {
    auto cfg = small_conv(16, 2, 4);
    Discriminator<double> d(cfg, 12);
    Rng rng(85);
    for (const auto& [name, b] : d.buffers()) {
        if (name.ends_with("running_var")) {
            auto v = b;
            for (auto& x : v.mutable_data()) x = rng.uniform(0.5, 2.0);
        }
    }
    auto cond = random_tensor<double>({1, 3, 16, 16}, rng, -1, 1, true);
    auto cand = random_tensor<double>({1, 3, 16, 16}, rng, -1, 1, true);
    auto w = random_tensor<double>({1, 1, 2, 2}, rng);
    auto params = d.parameters();
    params.emplace_back("cond", cond);
    params.emplace_back("cand", cand);
    GradCheckOptions opt;
    opt.max_elements = 48;
    auto r = gradcheck([&] { return weighted_sum(d.discriminate(cond, cand, nn::Phase::eval).logits, w); },
                       {params.begin(), params.end()}, opt);
    EXPECT_TRUE(r.ok) << r.report;
}

TEST(Discriminator, GradcheckBatchTraining) {
    Discriminator<double> d(small_conv(16, 2, 4), 13);
    Rng rng(86);
    auto cond = random_tensor<double>({2, 3, 16, 16}, rng);
    auto cand = random_tensor<double>({2, 3, 16, 16}, rng, -1, 1, true);
    auto w = random_tensor<double>({2, 1, 2, 2}, rng);
    auto params = d.parameters();
    params.emplace_back("cand", cand);
    GradCheckOptions opt;
    opt.max_elements = 48;
    auto r = gradcheck([&] { return weighted_sum(d.discriminate(cond, cand, nn::Phase::train).logits, w); },
                       {params.begin(), params.end()}, opt);
    EXPECT_TRUE(r.ok) << r.report;
}

TEST(Discriminator, ParametersAndBuffers) {
    Discriminator<float> d(DiscriminatorConfig{}, 14);
    auto params = d.parameters();
    // stage 0: conv weight+bias; stages 1-3: conv weight + bn gamma/beta; classifier weight+bias
    EXPECT_EQ(params.size(), 2u + 3u * 3u + 2u);
    EXPECT_EQ(d.buffers().size(), 6u);
    for (const auto& [name, p] : params) EXPECT_TRUE(p.requires_grad()) << name;
}

TEST(TransformerDiscriminator, GridEqualsPatchGrid) {
    Discriminator<float> d(small_transformer(), 15);
    EXPECT_EQ(d.config.output_grid(), 4u);
    Rng rng(87);
    auto x = random_tensor<float>({2, 3, 16, 16}, rng);
    auto logits = transformer_discriminate(d, x, x).logits;
    EXPECT_EQ(logits.shape(), (Shape{2, 1, 4, 4}));
}

TEST(TransformerDiscriminator, SameCallContractAsConv) {
    Discriminator<float> t(small_transformer(), 16);
    Discriminator<float> c(small_conv(16, 2), 16);
    Rng rng(88);
    auto x = random_tensor<float>({2, 3, 16, 16}, rng);
    auto y = random_tensor<float>({2, 3, 16, 16}, rng);
    EXPECT_EQ(t.discriminate(x, y, nn::Phase::train).logits.rank(), 4u);
    EXPECT_EQ(c.discriminate(x, y, nn::Phase::train).logits.rank(), 4u);
    EXPECT_THROW(discriminate(t, x, y, nn::Phase::train), ConfigError);
    EXPECT_THROW(transformer_discriminate(c, x, y), ConfigError);
    EXPECT_GT(max_abs_diff(t.discriminate(x, y, nn::Phase::train).logits, t.discriminate(y, y, nn::Phase::train).logits),
              0.0);
}

TEST(TransformerDiscriminator, RejectsIndivisiblePatch) {
    auto cfg = small_transformer();
    cfg.patch_size = 5;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TransformerDiscriminator, Gradcheck) {
    Discriminator<double> d([] {
        auto c = small_transformer();
        c.image_size = 8;
        return c;
    }(), 17);
    Rng rng(89);
    auto cond = random_tensor<double>({1, 3, 8, 8}, rng);
    auto cand = random_tensor<double>({1, 3, 8, 8}, rng, -1, 1, true);
    auto w = random_tensor<double>({1, 1, 2, 2}, rng);
    auto params = d.parameters();
    params.emplace_back("cand", cand);
    GradCheckOptions opt;
    opt.max_elements = 48;
    auto r = gradcheck([&] { return weighted_sum(transformer_discriminate(d, cond, cand).logits, w); },
                       {params.begin(), params.end()}, opt);
    EXPECT_TRUE(r.ok) << r.report;
}
