#include "vitgan/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "vitgan/error.hpp"

namespace vitgan {

namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
constexpr int kPngCompressionLevel = 6;
// Largest side accepted by the decoders; guards allocation on hostile headers.
constexpr std::uint32_t kMaxSide = 1u << 14;

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], std::span<const std::uint8_t> data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

std::uint8_t paeth(std::uint8_t a, std::uint8_t b, std::uint8_t c) {
    const int p = int{a} + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

void unfilter(std::vector<std::uint8_t>& raw, std::size_t height, std::size_t stride, std::size_t bpp,
              std::vector<std::uint8_t>& out) {
    out.assign(height * stride, 0);
    for (std::size_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
        std::uint8_t* row = out.data() + y * stride;
        const std::uint8_t* up = y > 0 ? out.data() + (y - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const std::uint8_t a = i >= bpp ? row[i - bpp] : 0;
            const std::uint8_t b = up ? up[i] : 0;
            const std::uint8_t c = (up && i >= bpp) ? up[i - bpp] : 0;
            std::uint8_t pred = 0;
            switch (filter) {
                case 0: pred = 0; break;
                case 1: pred = a; break;
                case 2: pred = b; break;
                case 3: pred = static_cast<std::uint8_t>((int{a} + b) / 2); break;
                case 4: pred = paeth(a, b, c); break;
                default: throw IoError("PNG scanline " + std::to_string(y) + " has unknown filter " + std::to_string(filter));
            }
            row[i] = static_cast<std::uint8_t>(src[i] + pred);
        }
    }
}

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace

Image8::Image8(std::size_t w, std::size_t h, std::size_t c) : width(w), height(h), channels(c), pixels(w * h * c, 0) {}

Image8 decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPngSignature.size() || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
        throw IoError("not a PNG file (bad signature)");
    }
    std::size_t pos = kPngSignature.size();
    std::uint32_t width = 0, height = 0;
    std::size_t channels = 0;
    bool seen_header = false, seen_end = false;
    std::vector<std::uint8_t> compressed;

    while (!seen_end) {
        if (pos + 12 > bytes.size()) throw IoError("PNG truncated inside chunk header");
        const std::uint32_t len = read_be32(&bytes[pos]);
        if (len > bytes.size() - pos - 12) throw IoError("PNG truncated inside chunk data");
        const std::uint8_t* type = &bytes[pos + 4];
        const std::uint8_t* data = type + 4;
        const std::uint32_t stored_crc = read_be32(data + len);
        if (crc32(0L, type, len + 4) != stored_crc) throw IoError("PNG chunk CRC mismatch");
        const std::string name(reinterpret_cast<const char*>(type), 4);

        if (name == "IHDR") {
            if (len != 13) throw IoError("PNG IHDR has length " + std::to_string(len));
            width = read_be32(data);
            height = read_be32(data + 4);
            const std::uint8_t depth = data[8], color = data[9], interlace = data[12];
            if (width == 0 || height == 0 || width > kMaxSide || height > kMaxSide) {
                throw IoError("PNG dimensions " + std::to_string(width) + "x" + std::to_string(height) + " unsupported");
            }
            if (depth != 8) throw IoError("PNG bit depth " + std::to_string(depth) + " unsupported (8 only)");
            if (color == 0) {
                channels = 1;
            } else if (color == 2) {
                channels = 3;
            } else {
                throw IoError("PNG color type " + std::to_string(color) + " unsupported (greyscale or RGB only)");
            }
            if (data[10] != 0 || data[11] != 0) throw IoError("PNG compression/filter method unsupported");
            if (interlace != 0) throw IoError("interlaced PNG unsupported");
            seen_header = true;
        } else if (name == "IDAT") {
            if (!seen_header) throw IoError("PNG IDAT before IHDR");
            compressed.insert(compressed.end(), data, data + len);
        } else if (name == "IEND") {
            seen_end = true;
        } else if (!seen_header) {
            throw IoError("PNG does not start with IHDR");
        } else if ((type[0] & 0x20) == 0) {
            throw IoError("PNG critical chunk " + name + " unsupported");
        }
        pos += 12 + len;
    }
    if (compressed.empty()) throw IoError("PNG has no image data");

    const std::size_t stride = width * channels;
    std::vector<std::uint8_t> raw(height * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int rc = uncompress(raw.data(), &raw_len, compressed.data(), static_cast<uLong>(compressed.size()));
    if (rc != Z_OK || raw_len != raw.size()) throw IoError("PNG image data failed to inflate");

    Image8 image;
    image.width = width;
    image.height = height;
    image.channels = channels;
    unfilter(raw, height, stride, channels, image.pixels);
    return image;
}

std::vector<std::uint8_t> encode_png(const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw IoError("PNG encoder supports 1 or 3 channels, got " + std::to_string(image.channels));
    }
    const std::size_t stride = image.width * image.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve(image.height * (stride + 1));
    for (std::size_t y = 0; y < image.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), image.pixels.begin() + static_cast<long>(y * stride),
                   image.pixels.begin() + static_cast<long>((y + 1) * stride));
    }
    uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> packed(packed_len);
    if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), kPngCompressionLevel) != Z_OK) {
        throw IoError("PNG deflate failed");
    }
    packed.resize(packed_len);

    std::vector<std::uint8_t> out(kPngSignature.begin(), kPngSignature.end());
    std::vector<std::uint8_t> header;
    put_be32(header, static_cast<std::uint32_t>(image.width));
    put_be32(header, static_cast<std::uint32_t>(image.height));
    header.push_back(8);
    header.push_back(image.channels == 3 ? 2 : 0);
    header.push_back(0);
    header.push_back(0);
    header.push_back(0);
    put_chunk(out, "IHDR", header);
    put_chunk(out, "IDAT", packed);
    put_chunk(out, "IEND", {});
    return out;
}

Image8 decode_pnm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&] {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw IoError("PNM header malformed");
        std::uint64_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > kMaxSide) throw IoError("PNM header value too large");
        }
        return static_cast<std::size_t>(v);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw IoError("not a binary PNM file (expected P5 or P6)");
    }
    const std::size_t channels = bytes[1] == '6' ? 3 : 1;
    pos = 2;
    const std::size_t w = read_uint(), h = read_uint(), maxval = read_uint();
    if (w == 0 || h == 0) throw IoError("PNM has empty dimensions");
    if (maxval != 255) throw IoError("PNM maxval " + std::to_string(maxval) + " unsupported (255 only)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("PNM header malformed");
    ++pos;
    Image8 image(w, h, channels);
    if (bytes.size() - pos < image.pixels.size()) throw IoError("PNM truncated pixel data");
    std::copy_n(bytes.begin() + static_cast<long>(pos), image.pixels.size(), image.pixels.begin());
    return image;
}

std::vector<std::uint8_t> encode_pnm(const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw IoError("PNM encoder supports 1 or 3 channels, got " + std::to_string(image.channels));
    }
    const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                               " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

Image8 read_image8(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
        return decode_png(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_image8(const Image8& image, const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        write_file(path, encode_png(image));
    } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
        if ((ext == ".ppm" && image.channels != 3) || (ext == ".pgm" && image.channels != 1)) {
            throw IoError(path.string() + ": extension does not match " + std::to_string(image.channels) + " channels");
        }
        write_file(path, encode_pnm(image));
    } else {
        throw IoError(path.string() + ": unsupported image extension '" + ext + "'");
    }
}

Tensor<float> image_to_tensor(const Image8& image) {
    const std::size_t hw = image.width * image.height;
    std::vector<float> data(image.channels * hw);
    for (std::size_t c = 0; c < image.channels; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            data[c * hw + i] = static_cast<float>(image.pixels[i * image.channels + c]) / 127.5f - 1.0f;
    return Tensor<float>({image.channels, image.height, image.width}, std::move(data));
}

Image8 tensor_to_image(const Tensor<float>& chw) {
    if (chw.rank() != 3 || (chw.size(0) != 1 && chw.size(0) != 3)) {
        throw DimensionError("image tensor must be [1|3, h, w], got " + shape_str(chw.shape()));
    }
    Image8 image(chw.size(2), chw.size(1), chw.size(0));
    const std::size_t hw = image.width * image.height;
    for (std::size_t c = 0; c < image.channels; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
            const float v = std::clamp(chw.data()[c * hw + i], -1.0f, 1.0f);
            image.pixels[i * image.channels + c] = static_cast<std::uint8_t>(std::lround((v + 1.0f) * 127.5f));
        }
    return image;
}

Tensor<float> load_image(const std::filesystem::path& path) { return image_to_tensor(read_image8(path)); }

void save_image(const Tensor<float>& chw, const std::filesystem::path& path) {
    write_image8(tensor_to_image(chw), path);
}

}  // namespace vitgan
