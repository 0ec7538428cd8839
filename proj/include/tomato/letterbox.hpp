#pragma once

#include "tomato/geometry.hpp"
#include "tomato/image.hpp"

namespace tomato {

// Letterbox padding value, mid-gray 114/255.
inline constexpr std::uint8_t kLetterboxFill = 114;

// Aspect-preserving resize of src into dst with centered padding. The
// resized region is resized_w x resized_h at offset (pad_x, pad_y); any odd
// leftover pixel goes to the right/bottom edge.
struct LetterboxMapping {
    double scale = 1.0;
    int pad_x = 0;
    int pad_y = 0;
    int resized_w = 0;
    int resized_h = 0;
    int src_w = 0;
    int src_h = 0;
    int dst_w = 0;
    int dst_h = 0;
};

LetterboxMapping letterbox(int src_w, int src_h, int dst_w, int dst_h);

Image letterbox_image(const Image& src, const LetterboxMapping& m);

// Letterboxed normalized coordinates to original normalized coordinates, clipped.
BoundingBox map_box_to_original(const BoundingBox& box, const LetterboxMapping& m);
// Original normalized coordinates to letterboxed normalized coordinates.
BoundingBox map_box_to_letterbox(const BoundingBox& box, const LetterboxMapping& m);

}  // namespace tomato
