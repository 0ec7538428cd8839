#include <algorithm>
#include <cmath>
#include <string>

#include "tomato/detection.hpp"
#include "tomato/error.hpp"

namespace tomato {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_shape(const HeadScale& scale) {
    if (scale.grid_w <= 0 || scale.grid_h <= 0) {
        throw Error(Errc::shape_mismatch, "grid dimensions must be positive");
    }
    if (scale.anchors.empty()) throw Error(Errc::shape_mismatch, "scale declares no anchors");
    if (scale.num_classes != kNumClasses) {
        throw Error(Errc::shape_mismatch,
                    "expected " + std::to_string(kNumClasses) + " classes, got " +
                        std::to_string(scale.num_classes));
    }
    if (scale.logits.size() != scale.expected_size()) {
        throw Error(Errc::shape_mismatch,
                    "logit tensor has " + std::to_string(scale.logits.size()) +
                        " values, declared shape needs " + std::to_string(scale.expected_size()));
    }
}

std::vector<Detection> decode_head(const RawHeadOutput& raw, double conf_threshold) {
    if (!(conf_threshold >= 0.0 && conf_threshold < 1.0)) {
        throw Error(Errc::contract, "confidence threshold must lie in [0, 1)");
    }
    std::vector<Detection> out;
    for (const auto& scale : raw) {
        check_shape(scale);
        for (int gy = 0; gy < scale.grid_h; ++gy) {
            for (int gx = 0; gx < scale.grid_w; ++gx) {
                for (std::size_t a = 0; a < scale.anchors.size(); ++a) {
                    const float* t = scale.logits.data() + scale.offset(gx, gy, a);

                    int best = 0;
                    for (int c = 1; c < scale.num_classes; ++c) {
                        if (t[5 + c] > t[5 + best]) best = c;  // ties keep the lower id
                    }
                    const double score = sigmoid(t[4]) * sigmoid(t[5 + best]);
                    if (!(score > conf_threshold)) continue;

                    const double cx = (2.0 * sigmoid(t[0]) - 0.5 + gx) / scale.grid_w;
                    const double cy = (2.0 * sigmoid(t[1]) - 0.5 + gy) / scale.grid_h;
                    const double sw = 2.0 * sigmoid(t[2]);
                    const double sh = 2.0 * sigmoid(t[3]);
                    const BoundingBox box =
                        clip_unit({cx, cy, scale.anchors[a].w * sw * sw, scale.anchors[a].h * sh * sh});
                    if (box.w < kMinDecodedSide || box.h < kMinDecodedSide) continue;

                    out.push_back({best, score, box});
                }
            }
        }
    }
    return out;
}

std::vector<Detection> non_max_suppression(std::span<const Detection> dets,
                                           double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw Error(Errc::contract, "NMS IoU threshold must lie in (0, 1)");
    }
    std::vector<Detection> sorted(dets.begin(), dets.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });

    std::vector<Detection> kept;
    std::vector<bool> removed(sorted.size(), false);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (removed[i]) continue;
        kept.push_back(sorted[i]);
        for (std::size_t j = i + 1; j < sorted.size(); ++j) {
            if (!removed[j] && sorted[j].class_id == sorted[i].class_id &&
                iou(sorted[i].box, sorted[j].box) > iou_threshold) {
                removed[j] = true;
            }
        }
    }
    return kept;
}

}  // namespace tomato
