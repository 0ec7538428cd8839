#pragma once

#include <span>
#include <vector>

#include "tomato/geometry.hpp"
#include "tomato/labels.hpp"

namespace tomato {

inline constexpr double kDefaultConfThreshold = 0.25;
inline constexpr double kDefaultNmsIouThreshold = 0.45;
// Clipped boxes narrower or shorter than this are dropped at decode time.
inline constexpr double kMinDecodedSide = 1e-3;

struct Anchor {
    double w = 0.0;  // normalized to the model input
    double h = 0.0;
};

// One detection scale. Logits are pre-activation and laid out as
// [grid_h][grid_w][anchor][tx, ty, tw, th, objectness, class_0..class_{n-1}].
struct HeadScale {
    int grid_w = 0;
    int grid_h = 0;
    std::vector<Anchor> anchors;
    int num_classes = kNumClasses;
    std::vector<float> logits;

    std::size_t stride() const { return 5 + static_cast<std::size_t>(num_classes); }
    std::size_t expected_size() const {
        return static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h) *
               anchors.size() * stride();
    }
    std::size_t offset(int gx, int gy, std::size_t anchor) const {
        return ((static_cast<std::size_t>(gy) * static_cast<std::size_t>(grid_w) +
                 static_cast<std::size_t>(gx)) * anchors.size() + anchor) * stride();
    }
};

using RawHeadOutput = std::vector<HeadScale>;

// Throws Error(shape_mismatch) when a scale disagrees with its declared shape.
void check_shape(const HeadScale& scale);

struct Detection {
    int class_id = 0;
    double score = 0.0;
    BoundingBox box;

    const ClassLabel& label() const { return label_for_id(class_id); }
    bool operator==(const Detection&) const = default;
};

double sigmoid(double x);

// Anchor-relative decoding: center = (2*sigmoid(t) - 0.5 + cell) / grid,
// size = anchor * (2*sigmoid(t))^2, score = sigmoid(obj) * max sigmoid(class).
// Emits detections with score > conf_threshold, in grid order.
std::vector<Detection> decode_head(const RawHeadOutput& raw, double conf_threshold);

// Greedy per-class suppression, output sorted by descending score (stable).
std::vector<Detection> non_max_suppression(std::span<const Detection> dets,
                                           double iou_threshold);

}  // namespace tomato
