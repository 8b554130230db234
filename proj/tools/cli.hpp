#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <ostream>
#include <vector>

#include "vitgan/image_io.hpp"

namespace vitgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Pixels between sheet cells, horizontally and vertically. No outer border.
inline constexpr std::size_t kSheetGutter = 2;
inline constexpr std::uint8_t kSheetBackground = 255;

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Maps a library exception onto the documented exit codes.
int exit_code_for(const std::exception& e);

/// Grid of equally sized cells, row-major, drawn as RGB. Greyscale cells are
/// replicated across channels. Every row must have the same length.
Image8 compose_sheet(const std::vector<std::vector<Image8>>& rows);

}  // namespace vitgan::cli
