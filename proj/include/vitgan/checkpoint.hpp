#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vitgan/generator.hpp"
#include "vitgan/tensor.hpp"

namespace vitgan {

struct TrainState;

// Container layout, all integers little-endian:
//   "VITG"  u32 version  u32 entry_count
//   per entry: u32 name_len, name bytes, u8 dtype, u32 ndim, u64 dims[ndim], payload
// dtype 1 = f32, 2 = f64, 3 = u64 (counters and seeds).
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u64 = 3 };

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint64_t>> values;

    DType dtype() const;
    bool operator==(const CheckpointEntry&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
/// LoadError on bad magic, version mismatch, truncation or trailing bytes.
std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint_file(const std::vector<CheckpointEntry>& entries, const std::filesystem::path& path);
std::vector<CheckpointEntry> read_checkpoint_file(const std::filesystem::path& path);

// Entry names: gen.* / disc.* for parameters and batch-norm buffers,
// opt.gen.{m,v}.* / opt.disc.{m,v}.* for Adam moments, opt.gen.t /
// opt.disc.t for the Adam step count, state.step and state.seed.
std::vector<CheckpointEntry> checkpoint_entries(const TrainState& state);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Restores into a state built from the same configs. The stored seed
/// replaces state.config.seed. LoadError on an unknown entry, a shape or
/// dtype mismatch, or missing entries (the message names them). Nothing is
/// modified unless the whole file checks out.
void load_checkpoint(const std::filesystem::path& path, TrainState& state);
void restore_entries(const std::vector<CheckpointEntry>& entries, TrainState& state);

/// Loads only gen.* entries (all of them must be present); everything else
/// in the file is ignored. For inference.
void load_generator(const std::filesystem::path& path, Generator<float>& generator);

/// A checkpoint holding only this marker stands for the oracle model whose
/// output is the reference target itself.
inline constexpr const char* kIdentityStubEntry = "stub.identity";
void write_identity_stub(const std::filesystem::path& path);
bool is_identity_stub(const std::vector<CheckpointEntry>& entries);

}  // namespace vitgan
