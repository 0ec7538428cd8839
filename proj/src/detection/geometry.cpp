#include "tomato/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace tomato {

namespace {
constexpr double kEdgeTolerance = 1e-9;
}

BoundingBox clip_unit(const BoundingBox& box) {
    // Boxes already inside are returned untouched; the corner round trip
    // would otherwise perturb them in the last bit.
    if (box.x1() >= 0.0 && box.y1() >= 0.0 && box.x2() <= 1.0 && box.y2() <= 1.0) return box;
    const double x1 = std::clamp(box.x1(), 0.0, 1.0);
    const double y1 = std::clamp(box.y1(), 0.0, 1.0);
    const double x2 = std::clamp(box.x2(), 0.0, 1.0);
    const double y2 = std::clamp(box.y2(), 0.0, 1.0);
    return BoundingBox::from_corners(x1, y1, std::max(x1, x2), std::max(y1, y2));
}

bool is_valid(const BoundingBox& box) {
    if (!std::isfinite(box.cx) || !std::isfinite(box.cy) || !std::isfinite(box.w) ||
        !std::isfinite(box.h)) {
        return false;
    }
    if (box.cx < 0.0 || box.cx > 1.0 || box.cy < 0.0 || box.cy > 1.0) return false;
    if (box.w <= 0.0 || box.w > 1.0 || box.h <= 0.0 || box.h > 1.0) return false;
    return box.x1() >= -kEdgeTolerance && box.y1() >= -kEdgeTolerance &&
           box.x2() <= 1.0 + kEdgeTolerance && box.y2() <= 1.0 + kEdgeTolerance;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace tomato
