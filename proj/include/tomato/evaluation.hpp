#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "tomato/detection.hpp"

namespace tomato::eval {

inline constexpr double kDefaultMatchIou = 0.5;

struct EvalSample {
    std::vector<LabeledBox> ground_truth;
    std::vector<Detection> predictions;
};

struct Match {
    std::size_t prediction = 0;  // index into EvalSample::predictions
    bool true_positive = false;
    bool operator==(const Match&) const = default;
};

// Greedy matching in descending score order (stable on input order). A
// prediction is a true positive when an unmatched ground-truth box of its
// class has IoU >= threshold; the best such box is consumed.
std::vector<Match> match_detections(const EvalSample& sample, double iou_threshold);

// How AP integrates the precision/recall staircase.
//   step       sum over true positives of precision * (1 / num_gt)
//   all_point  same sum over the monotone precision envelope
enum class Interpolation { step, all_point };

struct ScoredMatch {
    double score = 0.0;
    bool true_positive = false;
};

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

// nullopt when the class has no ground truth. Matches are stably re-sorted
// by descending score.
std::optional<double> average_precision(std::span<const ScoredMatch> matches, long num_gt,
                                        Interpolation mode = Interpolation::step);
std::vector<PrPoint> precision_recall(std::span<const ScoredMatch> matches, long num_gt);

struct EvalReport {
    std::map<int, double> per_class_ap;  // classes with at least one GT box
    std::map<int, long> gt_counts;       // every class, zero included
    std::map<int, std::vector<PrPoint>> pr_curves;
    double mean_ap = 0.0;
    double iou_threshold = kDefaultMatchIou;
    Interpolation interpolation = Interpolation::step;
};

// Throws Error(contract) when no sample has any ground truth.
EvalReport mean_average_precision(std::span<const EvalSample> samples,
                                  double iou_threshold = kDefaultMatchIou,
                                  Interpolation mode = Interpolation::step);

// Three decimals, halves rounded away from zero (0.8306 -> "0.831").
std::string format_ap(double value);

std::string format_report(const EvalReport& report, std::string_view method_name);
nlohmann::json report_to_json(const EvalReport& report, std::string_view method_name);

std::string_view interpolation_name(Interpolation mode);
std::optional<Interpolation> parse_interpolation(std::string_view name);

}  // namespace tomato::eval
