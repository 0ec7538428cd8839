#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tomato/geometry.hpp"
#include "tomato/image.hpp"
#include "tomato/random.hpp"

namespace tomato {

struct AnnotatedImage {
    Image image;
    std::vector<LabeledBox> boxes;
    bool operator==(const AnnotatedImage&) const = default;
};

namespace aug {

struct AugmentationConfig {
    std::uint64_t seed = 0;
    std::pair<double, double> scale_range{0.5, 1.5};
    double translate_max = 0.1;  // fraction of width / height
    double rotate_max = 10.0;    // degrees
    double mixup_alpha = 8.0;
    double pca_sigma = 0.1;
    double min_box_size = 1e-3;
    int mosaic_width = 640;
    int mosaic_height = 640;
};

// Throws Error(contract) on out-of-range fields.
void validate(const AugmentationConfig& cfg);

// --- mosaic -------------------------------------------------------------
// The pivot splits the canvas into quadrants filled (in order) top-left,
// top-right, bottom-left, bottom-right; each input is stretched to fill its
// quadrant.
struct MosaicParams {
    int pivot_x = 0;
    int pivot_y = 0;
};

MosaicParams sample_mosaic(const AugmentationConfig& cfg, Rng& rng);
AnnotatedImage mosaic_with(std::span<const AnnotatedImage> imgs, const MosaicParams& p,
                           const AugmentationConfig& cfg);
AnnotatedImage mosaic(std::span<const AnnotatedImage> imgs, const AugmentationConfig& cfg, Rng& rng);

// --- mixup --------------------------------------------------------------
double sample_mixup_lambda(const AugmentationConfig& cfg, Rng& rng);
// Pixels round(lambda*a + (1-lambda)*b); boxes a.boxes followed by b.boxes.
AnnotatedImage mixup_with(const AnnotatedImage& a, const AnnotatedImage& b, double lambda);
AnnotatedImage mixup(const AnnotatedImage& a, const AnnotatedImage& b,
                     const AugmentationConfig& cfg, Rng& rng);

// --- affine (scale, translation, rotation about the image center) -------
struct AffineParams {
    double scale = 1.0;
    double translate_x = 0.0;  // fraction of width
    double translate_y = 0.0;  // fraction of height
    double rotate_deg = 0.0;   // positive turns +x toward +y (clockwise on screen)

    bool is_identity() const {
        return scale == 1.0 && translate_x == 0.0 && translate_y == 0.0 && rotate_deg == 0.0;
    }
};

AffineParams sample_affine(const AugmentationConfig& cfg, Rng& rng);
AnnotatedImage affine_with(const AnnotatedImage& img, const AffineParams& p,
                           const AugmentationConfig& cfg);
AnnotatedImage affine_augment(const AnnotatedImage& img, const AugmentationConfig& cfg, Rng& rng);

// --- PCA color ----------------------------------------------------------
struct ColorPca {
    std::array<std::array<double, 3>, 3> covariance{};
    std::array<double, 3> eigenvalues{};                  // ascending
    std::array<std::array<double, 3>, 3> eigenvectors{};  // eigenvectors[i] pairs with eigenvalues[i]
};

// RGB covariance over all pixels, channel values scaled to [0,1].
ColorPca color_pca(const Image& image);
std::array<double, 3> sample_pca_alphas(const AugmentationConfig& cfg, Rng& rng);
// Adds sum_i alpha_i * lambda_i * e_i (in [0,1] units) to every pixel.
AnnotatedImage pca_color_with(const AnnotatedImage& img, const std::array<double, 3>& alphas);
AnnotatedImage pca_color_augment(const AnnotatedImage& img, const AugmentationConfig& cfg, Rng& rng);

}  // namespace aug
}  // namespace tomato
