#include "tomato/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tomato/error.hpp"

namespace tomato {

Image::Image(int w, int h, std::uint8_t fill)
    : width(w), height(h),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

Image decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw Error(Errc::input, "empty image payload");
    const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                         const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat decoded;
    try {
        decoded = cv::imdecode(buffer, cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        throw Error(Errc::input, std::string("image decode failed: ") + e.what());
    }
    if (decoded.empty() || decoded.depth() != CV_8U) {
        throw Error(Errc::input, "payload is not a decodable JPEG/PNG image");
    }
    cv::Mat rgb;
    cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
    Image out(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<std::uint8_t>(y);
        std::copy(row, row + rgb.cols * 3, out.pixels.begin() + static_cast<long>(out.index(0, y, 0)));
    }
    return out;
}

Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::input, "cannot open image: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_image(bytes);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    if (image.empty()) throw Error(Errc::contract, "cannot encode an empty image");
    cv::Mat rgb(image.height, image.width, CV_8UC3,
                const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", bgr, out)) throw Error(Errc::storage, "PNG encoding failed");
    return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::storage, "cannot write image: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::storage, "short write: " + path.string());
}

std::uint8_t sample_bilinear(const Image& src, double x, double y, int channel,
                             std::uint8_t fill) {
    if (x < -0.5 || y < -0.5 || x > src.width - 0.5 || y > src.height - 0.5) return fill;
    const double cx = std::clamp(x, 0.0, static_cast<double>(src.width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(src.height - 1));
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const int x1 = std::min(x0 + 1, src.width - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fx = cx - x0;
    const double fy = cy - y0;
    if (fx == 0.0 && fy == 0.0) return src.at(x0, y0, channel);
    const double top = src.at(x0, y0, channel) * (1.0 - fx) + src.at(x1, y0, channel) * fx;
    const double bottom = src.at(x0, y1, channel) * (1.0 - fx) + src.at(x1, y1, channel) * fx;
    const double v = top * (1.0 - fy) + bottom * fy;
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

Image resize_bilinear(const Image& src, int dst_w, int dst_h) {
    if (dst_w <= 0 || dst_h <= 0) throw Error(Errc::contract, "resize target must be positive");
    if (src.empty()) throw Error(Errc::contract, "cannot resize an empty image");
    if (dst_w == src.width && dst_h == src.height) return src;
    Image out(dst_w, dst_h);
    const double sx = static_cast<double>(src.width) / dst_w;
    const double sy = static_cast<double>(src.height) / dst_h;
    for (int y = 0; y < dst_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < dst_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            for (int c = 0; c < 3; ++c) {
                // Clamp so edge pixels replicate instead of fading to fill.
                out.at(x, y, c) = sample_bilinear(
                    src, std::clamp(fx, 0.0, src.width - 1.0),
                    std::clamp(fy, 0.0, src.height - 1.0), c, 0);
            }
        }
    }
    return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

std::string to_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

std::string content_hash(const Image& image) {
    std::uint8_t dims[8];
    for (int i = 0; i < 4; ++i) {
        dims[i] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(image.width) >> (8 * i));
        dims[4 + i] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(image.height) >> (8 * i));
    }
    auto h = fnv1a(kFnvOffset, dims);
    h = fnv1a(h, image.pixels);
    return to_hex(h);
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
    return to_hex(fnv1a(kFnvOffset, bytes));
}

}  // namespace tomato
