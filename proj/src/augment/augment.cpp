#include "tomato/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "tomato/error.hpp"
#include "tomato/labels.hpp"
#include "tomato/letterbox.hpp"

namespace tomato::aug {

namespace {

std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

// Clip and size-filter a transformed box; nullopt when it should be dropped.
std::optional<BoundingBox> finish_box(const BoundingBox& box, double min_size) {
    const auto clipped = clip_unit(box);
    if (clipped.w < min_size || clipped.h < min_size || clipped.w <= 0.0 || clipped.h <= 0.0) {
        return std::nullopt;
    }
    return clipped;
}

void check_image(const AnnotatedImage& img, const char* what) {
    if (img.image.empty()) throw Error(Errc::contract, std::string(what) + ": empty image");
    if (img.image.pixels.size() != static_cast<std::size_t>(img.image.width) *
                                       static_cast<std::size_t>(img.image.height) * 3) {
        throw Error(Errc::contract, std::string(what) + ": pixel buffer is not H x W x 3");
    }
    for (const auto& b : img.boxes) {
        if (b.class_id < 0 || b.class_id >= kNumClasses) {
            throw Error(Errc::contract, std::string(what) + ": class id out of range");
        }
    }
}

}  // namespace

void validate(const AugmentationConfig& cfg) {
    if (!(cfg.scale_range.first > 0.0) || cfg.scale_range.second < cfg.scale_range.first) {
        throw Error(Errc::contract, "scale_range must satisfy 0 < min <= max");
    }
    if (!(cfg.translate_max >= 0.0 && cfg.translate_max < 1.0)) {
        throw Error(Errc::contract, "translate_max must lie in [0, 1)");
    }
    if (!(cfg.rotate_max >= 0.0 && cfg.rotate_max < 180.0)) {
        throw Error(Errc::contract, "rotate_max must lie in [0, 180)");
    }
    if (!(cfg.mixup_alpha > 0.0)) throw Error(Errc::contract, "mixup_alpha must be positive");
    if (!(cfg.pca_sigma >= 0.0)) throw Error(Errc::contract, "pca_sigma must be non-negative");
    if (!(cfg.min_box_size >= 0.0 && cfg.min_box_size < 1.0)) {
        throw Error(Errc::contract, "min_box_size must lie in [0, 1)");
    }
    if (cfg.mosaic_width < 2 || cfg.mosaic_height < 2) {
        throw Error(Errc::contract, "mosaic canvas must be at least 2x2");
    }
}

// --- mosaic -------------------------------------------------------------

MosaicParams sample_mosaic(const AugmentationConfig& cfg, Rng& rng) {
    const auto pick = [&](int extent) {
        const int lo = extent / 4;
        const int hi = (3 * extent + 3) / 4;
        return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    };
    MosaicParams p;
    p.pivot_x = pick(cfg.mosaic_width);
    p.pivot_y = pick(cfg.mosaic_height);
    return p;
}

AnnotatedImage mosaic_with(std::span<const AnnotatedImage> imgs, const MosaicParams& p,
                           const AugmentationConfig& cfg) {
    if (imgs.size() != 4) {
        throw Error(Errc::contract, "mosaic needs exactly 4 images, got " + std::to_string(imgs.size()));
    }
    for (const auto& img : imgs) check_image(img, "mosaic");
    const int W = cfg.mosaic_width;
    const int H = cfg.mosaic_height;
    if (p.pivot_x <= 0 || p.pivot_x >= W || p.pivot_y <= 0 || p.pivot_y >= H) {
        throw Error(Errc::contract, "mosaic pivot must lie strictly inside the canvas");
    }

    struct Quadrant { int x, y, w, h; };
    const std::array<Quadrant, 4> quads{{
        {0, 0, p.pivot_x, p.pivot_y},
        {p.pivot_x, 0, W - p.pivot_x, p.pivot_y},
        {0, p.pivot_y, p.pivot_x, H - p.pivot_y},
        {p.pivot_x, p.pivot_y, W - p.pivot_x, H - p.pivot_y},
    }};

    AnnotatedImage out{Image(W, H), {}};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& q = quads[i];
        const Image tile = resize_bilinear(imgs[i].image, q.w, q.h);
        for (int y = 0; y < q.h; ++y) {
            const auto from = tile.pixels.begin() + static_cast<long>(tile.index(0, y, 0));
            std::copy(from, from + q.w * 3,
                      out.image.pixels.begin() + static_cast<long>(out.image.index(q.x, q.y + y, 0)));
        }
        for (const auto& b : imgs[i].boxes) {
            const BoundingBox mapped{(q.x + b.box.cx * q.w) / W, (q.y + b.box.cy * q.h) / H,
                                     b.box.w * q.w / W, b.box.h * q.h / H};
            if (auto kept = finish_box(mapped, cfg.min_box_size)) {
                out.boxes.push_back({b.class_id, *kept});
            }
        }
    }
    return out;
}

AnnotatedImage mosaic(std::span<const AnnotatedImage> imgs, const AugmentationConfig& cfg, Rng& rng) {
    validate(cfg);
    if (imgs.size() != 4) {
        throw Error(Errc::contract, "mosaic needs exactly 4 images, got " + std::to_string(imgs.size()));
    }
    return mosaic_with(imgs, sample_mosaic(cfg, rng), cfg);
}

// --- mixup --------------------------------------------------------------

double sample_mixup_lambda(const AugmentationConfig& cfg, Rng& rng) {
    return rng.beta(cfg.mixup_alpha, cfg.mixup_alpha);
}

AnnotatedImage mixup_with(const AnnotatedImage& a, const AnnotatedImage& b, double lambda) {
    check_image(a, "mixup");
    check_image(b, "mixup");
    if (a.image.width != b.image.width || a.image.height != b.image.height) {
        throw Error(Errc::contract, "mixup inputs must share dimensions");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(Errc::contract, "mixup lambda must lie in [0, 1]");
    AnnotatedImage out{Image(a.image.width, a.image.height), a.boxes};
    const double mu = 1.0 - lambda;
    for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
        out.image.pixels[i] = to_u8(lambda * a.image.pixels[i] + mu * b.image.pixels[i]);
    }
    out.boxes.insert(out.boxes.end(), b.boxes.begin(), b.boxes.end());
    return out;
}

AnnotatedImage mixup(const AnnotatedImage& a, const AnnotatedImage& b,
                     const AugmentationConfig& cfg, Rng& rng) {
    validate(cfg);
    return mixup_with(a, b, sample_mixup_lambda(cfg, rng));
}

// --- affine -------------------------------------------------------------

AffineParams sample_affine(const AugmentationConfig& cfg, Rng& rng) {
    AffineParams p;
    p.scale = rng.uniform(cfg.scale_range.first, cfg.scale_range.second);
    p.translate_x = rng.uniform(-cfg.translate_max, cfg.translate_max);
    p.translate_y = rng.uniform(-cfg.translate_max, cfg.translate_max);
    p.rotate_deg = rng.uniform(-cfg.rotate_max, cfg.rotate_max);
    return p;
}

AnnotatedImage affine_with(const AnnotatedImage& img, const AffineParams& p,
                           const AugmentationConfig& cfg) {
    check_image(img, "affine");
    if (!(p.scale > 0.0)) throw Error(Errc::contract, "affine scale must be positive");
    const int W = img.image.width;
    const int H = img.image.height;
    const double cx = W / 2.0;
    const double cy = H / 2.0;
    const double tx = p.translate_x * W;
    const double ty = p.translate_y * H;
    const double theta = p.rotate_deg * std::numbers::pi / 180.0;
    const double c = p.rotate_deg == 0.0 ? 1.0 : std::cos(theta);
    const double s = p.rotate_deg == 0.0 ? 0.0 : std::sin(theta);

    // Forward: q = C + t + scale * R * (p - C), in continuous pixel coordinates.
    const auto forward = [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        return std::pair{cx + tx + p.scale * (c * dx - s * dy), cy + ty + p.scale * (s * dx + c * dy)};
    };

    AnnotatedImage out{Image(W, H), {}};
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double qx = x + 0.5 - cx - tx;
            const double qy = y + 0.5 - cy - ty;
            const double sx = cx + (c * qx + s * qy) / p.scale - 0.5;
            const double sy = cy + (-s * qx + c * qy) / p.scale - 0.5;
            for (int ch = 0; ch < 3; ++ch) {
                out.image.at(x, y, ch) = sample_bilinear(img.image, sx, sy, ch, kLetterboxFill);
            }
        }
    }

    for (const auto& b : img.boxes) {
        double x1 = 1e300, y1 = 1e300, x2 = -1e300, y2 = -1e300;
        for (const auto& [u, v] : {std::pair{b.box.x1(), b.box.y1()}, std::pair{b.box.x2(), b.box.y1()},
                                   std::pair{b.box.x1(), b.box.y2()}, std::pair{b.box.x2(), b.box.y2()}}) {
            const auto [fx, fy] = forward(u * W, v * H);
            x1 = std::min(x1, fx);
            y1 = std::min(y1, fy);
            x2 = std::max(x2, fx);
            y2 = std::max(y2, fy);
        }
        const auto hull = BoundingBox::from_corners(x1 / W, y1 / H, x2 / W, y2 / H);
        if (auto kept = finish_box(hull, cfg.min_box_size)) out.boxes.push_back({b.class_id, *kept});
    }
    return out;
}

AnnotatedImage affine_augment(const AnnotatedImage& img, const AugmentationConfig& cfg, Rng& rng) {
    validate(cfg);
    return affine_with(img, sample_affine(cfg, rng), cfg);
}

// --- PCA color ----------------------------------------------------------

ColorPca color_pca(const Image& image) {
    if (image.empty()) throw Error(Errc::contract, "color_pca: empty image");
    const std::size_t n = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        for (int ch = 0; ch < 3; ++ch) mean[ch] += image.pixels[i * 3 + ch] / 255.0;
    }
    mean /= static_cast<double>(n);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector3d d;
        for (int ch = 0; ch < 3; ++ch) d[ch] = image.pixels[i * 3 + ch] / 255.0 - mean[ch];
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(n);

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    ColorPca out;
    for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) out.covariance[r][col] = cov(r, col);
        out.eigenvalues[r] = std::max(0.0, solver.eigenvalues()[r]);
        for (int k = 0; k < 3; ++k) out.eigenvectors[r][k] = solver.eigenvectors()(k, r);
    }
    return out;
}

std::array<double, 3> sample_pca_alphas(const AugmentationConfig& cfg, Rng& rng) {
    std::array<double, 3> alphas{};
    for (auto& a : alphas) a = cfg.pca_sigma == 0.0 ? 0.0 : rng.normal(0.0, cfg.pca_sigma);
    return alphas;
}

AnnotatedImage pca_color_with(const AnnotatedImage& img, const std::array<double, 3>& alphas) {
    check_image(img, "pca_color");
    const auto pca = color_pca(img.image);
    std::array<double, 3> shift{};
    for (int i = 0; i < 3; ++i) {
        for (int ch = 0; ch < 3; ++ch) shift[ch] += alphas[i] * pca.eigenvalues[i] * pca.eigenvectors[i][ch];
    }
    AnnotatedImage out = img;
    for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
        out.image.pixels[i] = to_u8(img.image.pixels[i] + 255.0 * shift[i % 3]);
    }
    return out;
}

AnnotatedImage pca_color_augment(const AnnotatedImage& img, const AugmentationConfig& cfg, Rng& rng) {
    validate(cfg);
    return pca_color_with(img, sample_pca_alphas(cfg, rng));
}

}  // namespace tomato::aug
