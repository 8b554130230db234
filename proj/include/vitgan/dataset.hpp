#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vitgan/image_io.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan {

/// One conditioning/target pair, each [c, h, w] in [-1, 1].
struct PairedSample {
    Tensor<float> input;
    Tensor<float> target;
    std::string id;
};

enum class SyntheticTask {
    seg_maps,     // shaded shapes -> flat label colours
    inverse_seg,  // label colours -> shaded shapes
    depth,        // shaded shapes -> single-channel depth, near = bright
};

const char* to_string(SyntheticTask task);
/// ConfigError for unknown names.
SyntheticTask parse_synthetic_task(const std::string& name);

struct SyntheticTaskSpec {
    SyntheticTask task = SyntheticTask::seg_maps;
    std::size_t image_size = 64;
    std::size_t min_shapes = 2;
    std::size_t max_shapes = 4;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t input_channels() const { return 3; }
    std::size_t target_channels() const { return task == SyntheticTask::depth ? 1 : 3; }
};

/// Shape classes and their label colours. Index 0 is the background.
inline constexpr std::size_t kNumShapeClasses = 3;  // ellipse, rectangle, diamond
inline constexpr std::array<std::array<std::uint8_t, 3>, kNumShapeClasses + 1> kLabelPalette{{
    {0, 0, 0},
    {230, 25, 75},
    {60, 180, 75},
    {0, 130, 200},
}};

/// 8-bit pair as rendered; synth_pair is this, normalised.
struct SyntheticImages {
    Image8 input;
    Image8 target;
};

/// Pure function of (spec, index).
SyntheticImages render_synthetic(const SyntheticTaskSpec& spec, std::uint64_t index);
PairedSample synth_pair(const SyntheticTaskSpec& spec, std::uint64_t index);

/// Canonical `key=value;` text of the task spec and its FNV-1a hash. Every field
/// that changes the rendered pixels is included.
std::string canonical_spec(const SyntheticTaskSpec& spec);
std::uint64_t spec_hash(const SyntheticTaskSpec& spec);

/// Zero-padded id used for synthetic sample `index`.
std::string synthetic_id(std::uint64_t index);

class PairedDataset {
public:
    virtual ~PairedDataset() = default;
    virtual std::size_t size() const = 0;
    virtual PairedSample get(std::size_t i) const = 0;
};

/// Samples index_offset .. index_offset + count - 1 of a synthetic task.
class SyntheticDataset final : public PairedDataset {
public:
    SyntheticDataset(SyntheticTaskSpec spec, std::size_t count, std::uint64_t index_offset = 0);
    std::size_t size() const override { return count_; }
    PairedSample get(std::size_t i) const override;

private:
    SyntheticTaskSpec spec_;
    std::size_t count_;
    std::uint64_t offset_;
};

/// Directory of `<id>.input.png` / `<id>.target.png` pairs, ordered by id.
/// Pairs are decoded once at construction.
class DirectoryDataset final : public PairedDataset {
public:
    explicit DirectoryDataset(const std::filesystem::path& dir);
    std::size_t size() const override { return samples_.size(); }
    PairedSample get(std::size_t i) const override;

private:
    std::vector<PairedSample> samples_;
};

inline constexpr const char* kInputSuffix = ".input.png";
inline constexpr const char* kTargetSuffix = ".target.png";

/// Stacked batch: input [b, c1, h, w], target [b, c2, h, w].
struct Batch {
    Tensor<float> input;
    Tensor<float> target;
    std::vector<std::string> ids;
};

/// ContractError on an empty list or mismatched shapes.
Batch collate(const std::vector<PairedSample>& samples);

/// Seeded shuffled epochs with the trailing partial batch dropped. The
/// order is a pure function of (seed, epoch), so batch k of a run can be
/// recomputed from k alone, which is what makes resume exact.
class Batcher {
public:
    Batcher(const PairedDataset& dataset, std::size_t batch_size, std::uint64_t seed);

    std::size_t batches_per_epoch() const { return batches_per_epoch_; }
    std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
    /// Batch number `k` counted from the start of epoch 0.
    Batch batch_at(std::uint64_t k) const;
    std::vector<std::size_t> indices_at(std::uint64_t k) const;

    /// Sequential iteration from a cursor.
    Batch next() { return batch_at(cursor_++); }
    void seek(std::uint64_t k) { cursor_ = k; }
    std::uint64_t position() const { return cursor_; }

private:
    const PairedDataset& dataset_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t batches_per_epoch_;
    std::uint64_t cursor_ = 0;
};

}  // namespace vitgan
