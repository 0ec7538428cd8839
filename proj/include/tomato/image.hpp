#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tomato {

// 8-bit RGB, row-major, channels interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0);

    bool empty() const { return width == 0 || height == 0; }
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
    }
    std::uint8_t& at(int x, int y, int c) { return pixels[index(x, y, c)]; }
    std::uint8_t at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

    bool operator==(const Image&) const = default;
};

// JPEG/PNG/BMP bytes to RGB. Throws Error(input) when undecodable.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

// Bilinear resampling with half-pixel centers. Same-size input is copied.
Image resize_bilinear(const Image& src, int dst_w, int dst_h);

// Samples at a fractional pixel position (pixel centers at integer coords).
// Positions outside the image return `fill`.
std::uint8_t sample_bilinear(const Image& src, double x, double y, int channel,
                             std::uint8_t fill);

// FNV-1a 64-bit over dimensions and pixel bytes, as 16 lowercase hex digits.
std::string content_hash(const Image& image);
std::string content_hash(std::span<const std::uint8_t> bytes);

}  // namespace tomato
