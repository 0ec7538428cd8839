#pragma once

namespace tomato {

// Axis-aligned box in normalized image coordinates (center + size).
struct BoundingBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    static BoundingBox from_corners(double x1, double y1, double x2, double y2) {
        return {(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1};
    }

    double x1() const { return cx - w / 2.0; }
    double y1() const { return cy - h / 2.0; }
    double x2() const { return cx + w / 2.0; }
    double y2() const { return cy + h / 2.0; }
    double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }

    bool operator==(const BoundingBox&) const = default;
};

// Annotated object: class id plus box.
struct LabeledBox {
    int class_id = 0;
    BoundingBox box;
    bool operator==(const LabeledBox&) const = default;
};

// Clips the corners to [0,1]. The result may have zero width or height.
BoundingBox clip_unit(const BoundingBox& box);

// Center in [0,1], size in (0,1], corners in [0,1] (with a small tolerance
// for rounding at the edges).
bool is_valid(const BoundingBox& box);

// Intersection over union. Zero-area boxes give 0.
double iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace tomato
