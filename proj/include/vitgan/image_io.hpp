#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vitgan/tensor.hpp"

namespace vitgan {

/// 8-bit image, interleaved row-major (y, x, channel). 1 or 3 channels.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(std::size_t width, std::size_t height, std::size_t channels);

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

    bool operator==(const Image8&) const = default;
};

// PNG: 8-bit greyscale or RGB, non-interlaced. Decoding handles all five
// scanline filters; encoding writes filter type 0 at a fixed zlib level so
// output bytes are a pure function of the pixels.
Image8 decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image8& image);

// Binary PNM: P5 (grey) and P6 (RGB) with maxval 255.
Image8 decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image8& image);

/// Format is sniffed from the leading bytes. IoError names the path.
Image8 read_image8(const std::filesystem::path& path);
/// Format from the extension: .png, .ppm, .pgm (.pnm picks by channels).
void write_image8(const Image8& image, const std::filesystem::path& path);

/// [c, h, w] tensor with v / 127.5 - 1, so 0 -> -1 and 255 -> 1.
Tensor<float> image_to_tensor(const Image8& image);
/// Inverse map with clamping to [-1, 1] and round-to-nearest.
Image8 tensor_to_image(const Tensor<float>& chw);

Tensor<float> load_image(const std::filesystem::path& path);
void save_image(const Tensor<float>& chw, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Write through a temporary file and rename into place.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace vitgan
