#include "tomato/letterbox.hpp"

#include <algorithm>
#include <cmath>

#include "tomato/error.hpp"

namespace tomato {

LetterboxMapping letterbox(int src_w, int src_h, int dst_w, int dst_h) {
    if (src_w <= 0 || src_h <= 0 || dst_w <= 0 || dst_h <= 0) {
        throw Error(Errc::contract, "letterbox dimensions must be positive");
    }
    LetterboxMapping m;
    m.src_w = src_w;
    m.src_h = src_h;
    m.dst_w = dst_w;
    m.dst_h = dst_h;
    m.scale = std::min(static_cast<double>(dst_w) / src_w, static_cast<double>(dst_h) / src_h);
    m.resized_w = std::clamp(static_cast<int>(std::lround(src_w * m.scale)), 1, dst_w);
    m.resized_h = std::clamp(static_cast<int>(std::lround(src_h * m.scale)), 1, dst_h);
    m.pad_x = (dst_w - m.resized_w) / 2;
    m.pad_y = (dst_h - m.resized_h) / 2;
    return m;
}

Image letterbox_image(const Image& src, const LetterboxMapping& m) {
    if (src.width != m.src_w || src.height != m.src_h) {
        throw Error(Errc::contract, "image does not match letterbox source dimensions");
    }
    const Image resized = resize_bilinear(src, m.resized_w, m.resized_h);
    if (m.resized_w == m.dst_w && m.resized_h == m.dst_h) return resized;
    Image out(m.dst_w, m.dst_h, kLetterboxFill);
    for (int y = 0; y < m.resized_h; ++y) {
        const auto from = resized.pixels.begin() + static_cast<long>(resized.index(0, y, 0));
        std::copy(from, from + m.resized_w * 3,
                  out.pixels.begin() + static_cast<long>(out.index(m.pad_x, m.pad_y + y, 0)));
    }
    return out;
}

BoundingBox map_box_to_original(const BoundingBox& box, const LetterboxMapping& m) {
    // Per-axis scale of the resized region, which absorbs rounding of its size.
    const double sx = static_cast<double>(m.resized_w) / m.src_w;
    const double sy = static_cast<double>(m.resized_h) / m.src_h;
    const double cx = (box.cx * m.dst_w - m.pad_x) / sx / m.src_w;
    const double cy = (box.cy * m.dst_h - m.pad_y) / sy / m.src_h;
    const double w = box.w * m.dst_w / sx / m.src_w;
    const double h = box.h * m.dst_h / sy / m.src_h;
    return clip_unit({cx, cy, w, h});
}

BoundingBox map_box_to_letterbox(const BoundingBox& box, const LetterboxMapping& m) {
    const double sx = static_cast<double>(m.resized_w) / m.src_w;
    const double sy = static_cast<double>(m.resized_h) / m.src_h;
    return {(box.cx * m.src_w * sx + m.pad_x) / m.dst_w,
            (box.cy * m.src_h * sy + m.pad_y) / m.dst_h,
            box.w * m.src_w * sx / m.dst_w,
            box.h * m.src_h * sy / m.dst_h};
}

}  // namespace tomato
