#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "support/toy.hpp"
#include "vitgan/checkpoint.hpp"
#include "vitgan/error.hpp"
#include "vitgan/image_io.hpp"
#include "vitgan/training.hpp"

using namespace vitgan;
using namespace vitgan::testing;

namespace {

struct Scratch {
    std::filesystem::path dir;
    Scratch() {
        dir = std::filesystem::temp_directory_path() / ("vitgan_ckpt_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);
    }
    ~Scratch() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
    }
};

Batch tiny_batch() {
    const SyntheticDataset ds(tiny_task(), 2);
    return collate({ds.get(0), ds.get(1)});
}

std::vector<std::uint8_t> trained_bytes(TrainMode mode) {
    TrainState state(tiny_generator(), tiny_discriminator(), tiny_train(mode));
    train_step(state, tiny_batch());
    return encode_checkpoint(checkpoint_entries(state));
}

std::string load_error(const std::vector<std::uint8_t>& bytes, TrainMode mode) {
    TrainState state(tiny_generator(), tiny_discriminator(), tiny_train(mode));
    try {
        restore_entries(decode_checkpoint(bytes), state);
    } catch (const LoadError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Container, RoundTripsEveryDtypeBitExactly) {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::vector<CheckpointEntry> entries{
        {"a", Shape{2, 2}, std::vector<float>{1.5f, -0.0f, nan, std::numeric_limits<float>::denorm_min()}},
        {"b", Shape{3}, std::vector<double>{1e-300, -2.5, 3.0}},
        {"c", Shape{1}, std::vector<std::uint64_t>{0xdeadbeefcafef00dULL}},
        {"scalar", Shape{}, std::vector<float>{7.0f}},
        {"empty", Shape{0, 4}, std::vector<float>{}},
    };
    const auto bytes = encode_checkpoint(entries);
    EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
    const auto back = decode_checkpoint(bytes);
    ASSERT_EQ(back.size(), entries.size());
    EXPECT_EQ(back[1], entries[1]);
    EXPECT_EQ(back[2], entries[2]);
    EXPECT_EQ(back[0].dtype(), DType::f32);
    EXPECT_TRUE(std::isnan(std::get<std::vector<float>>(back[0].values)[2]));
    EXPECT_TRUE(std::signbit(std::get<std::vector<float>>(back[0].values)[1]));
}

TEST(Container, HeaderLayout) {
    const auto bytes = encode_checkpoint({{"xy", Shape{1}, std::vector<float>{1.0f}}});
    const std::vector<std::uint8_t> expect{'V', 'I', 'T', 'G', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
                                           2, 0, 0, 0, 'x', 'y', 1,                     // name, dtype
                                           1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0,           // ndim, dims
                                           0x00, 0x00, 0x80, 0x3f};                     // 1.0f LE
    EXPECT_EQ(bytes, expect);
}

TEST(Container, RejectsCorruption) {
    const auto good = encode_checkpoint({{"w", Shape{2}, std::vector<float>{1, 2}}});
    auto magic = good;
    magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(magic), LoadError);
    auto version = good;
    version[4] = 2;
    try {
        decode_checkpoint(version);
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
    for (std::size_t cut = 0; cut < good.size(); ++cut) {
        EXPECT_THROW(decode_checkpoint(std::span(good.data(), cut)), LoadError) << cut;
    }
    auto trailing = good;
    trailing.push_back(0);
    EXPECT_THROW(decode_checkpoint(trailing), LoadError);
    auto dtype = good;
    dtype[12 + 4 + 1] = 9;
    EXPECT_THROW(decode_checkpoint(dtype), LoadError);
    auto huge = good;
    huge[12 + 4 + 1 + 1 + 4 + 7] = 0x7f;  // top byte of dims[0]
    EXPECT_THROW(decode_checkpoint(huge), LoadError);
}

TEST(StateCheckpoint, SaveLoadIsBitExact) {
    Scratch s;
    for (auto mode : {TrainMode::cgan_l1, TrainMode::l1_only}) {
        TrainState a(tiny_generator(), tiny_discriminator(), tiny_train(mode, 3));
        train_step(a, tiny_batch());
        train_step(a, tiny_batch());
        const auto path = s.dir / "state.vitg";
        save_checkpoint(a, path);
        TrainState b(tiny_generator(), tiny_discriminator(), tiny_train(mode, 4));
        load_checkpoint(path, b);
        EXPECT_EQ(encode_checkpoint(checkpoint_entries(b)), read_file(path));
        EXPECT_EQ(b.step, 2u);
        EXPECT_EQ(b.opt_g.steps_taken(), 2u);
    }
}

TEST(StateCheckpoint, EntryNamesUseDocumentedPrefixes) {
    TrainState state(tiny_generator(), tiny_discriminator(), tiny_train(TrainMode::cgan_l1));
    std::size_t gen = 0, disc = 0, opt = 0, other = 0;
    for (const auto& e : checkpoint_entries(state)) {
        if (e.name.starts_with("gen.")) ++gen;
        else if (e.name.starts_with("disc.")) ++disc;
        else if (e.name.starts_with("opt.gen.") || e.name.starts_with("opt.disc.")) ++opt;
        else if (e.name == "state.step" || e.name == "state.seed") ++other;
        else ADD_FAILURE() << e.name;
    }
    const std::size_t g = state.generator.parameters().size(), d = state.discriminator->parameters().size();
    EXPECT_EQ(gen, g + state.generator.buffers().size());
    EXPECT_EQ(disc, d + state.discriminator->buffers().size());
    EXPECT_EQ(opt, 2 * g + 2 * d + 2);
    EXPECT_EQ(other, 2u);
}

TEST(StateCheckpoint, GeneratorOnlyIntoCganNamesMissingDisc) {
    const std::string msg = load_error(trained_bytes(TrainMode::l1_only), TrainMode::cgan_l1);
    EXPECT_NE(msg.find("missing"), std::string::npos) << msg;
    EXPECT_NE(msg.find("disc."), std::string::npos) << msg;
}

TEST(StateCheckpoint, UnknownNameAndShapeMismatch) {
    auto entries = decode_checkpoint(trained_bytes(TrainMode::l1_only));
    auto extra = entries;
    extra.push_back({"gen.bogus", Shape{1}, std::vector<float>{0}});
    EXPECT_NE(load_error(encode_checkpoint(extra), TrainMode::l1_only).find("gen.bogus"), std::string::npos);

    auto reshaped = entries;
    reshaped[0].shape.push_back(1);
    EXPECT_NE(load_error(encode_checkpoint(reshaped), TrainMode::l1_only).find("shape"), std::string::npos);

    auto retyped = entries;
    const auto& f = std::get<std::vector<float>>(retyped[0].values);
    retyped[0].values = std::vector<double>(f.begin(), f.end());
    EXPECT_NE(load_error(encode_checkpoint(retyped), TrainMode::l1_only), "");
}

TEST(StateCheckpoint, FailedLoadLeavesStateUntouched) {
    TrainState state(tiny_generator(), tiny_discriminator(), tiny_train(TrainMode::cgan_l1));
    const auto before = encode_checkpoint(checkpoint_entries(state));
    EXPECT_THROW(restore_entries(decode_checkpoint(trained_bytes(TrainMode::l1_only)), state), LoadError);
    EXPECT_EQ(encode_checkpoint(checkpoint_entries(state)), before);
}

TEST(StateCheckpoint, ResumedStepReproducesMetrics) {
    Scratch s;
    const Batch batch = tiny_batch();
    TrainState a(tiny_generator(), tiny_discriminator(), tiny_train(TrainMode::cgan_l1));
    train_step(a, batch);
    save_checkpoint(a, s.dir / "mid.vitg");
    const auto next = format_metrics_line(train_step(a, batch));
    TrainState b(tiny_generator(), tiny_discriminator(), tiny_train(TrainMode::cgan_l1, 77));
    load_checkpoint(s.dir / "mid.vitg", b);
    EXPECT_EQ(format_metrics_line(train_step(b, batch)), next);
}

TEST(GeneratorCheckpoint, LoadsWeightsOnly) {
    Scratch s;
    TrainState a(tiny_generator(), tiny_discriminator(), tiny_train(TrainMode::cgan_l1));
    train_step(a, tiny_batch());
    save_checkpoint(a, s.dir / "g.vitg");
    Generator<float> g(tiny_generator(), 12345);
    load_generator(s.dir / "g.vitg", g);
    const Batch batch = tiny_batch();
    const auto ya = a.generator.forward(batch.input, nn::Phase::eval);
    const auto yb = g.forward(batch.input, nn::Phase::eval);
    EXPECT_TRUE(std::ranges::equal(ya.data(), yb.data()));

    GeneratorConfig bigger = tiny_generator();
    bigger.image_size = 32;
    Generator<float> wrong(bigger, 1);
    EXPECT_THROW(load_generator(s.dir / "g.vitg", wrong), LoadError);
    EXPECT_THROW(load_generator(s.dir / "absent.vitg", g), LoadError);
}

TEST(IdentityStub, IsRecognisedAndRefusedAsTrainingState) {
    Scratch s;
    write_identity_stub(s.dir / "stub.vitg");
    const auto entries = read_checkpoint_file(s.dir / "stub.vitg");
    EXPECT_TRUE(is_identity_stub(entries));
    TrainState state(tiny_generator(), tiny_discriminator(), tiny_train(TrainMode::l1_only));
    EXPECT_THROW(load_checkpoint(s.dir / "stub.vitg", state), LoadError);
    EXPECT_FALSE(is_identity_stub(checkpoint_entries(state)));
}
