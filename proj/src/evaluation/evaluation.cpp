#include "tomato/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tomato/error.hpp"
#include "tomato/labels.hpp"

namespace tomato::eval {

namespace {

std::vector<std::size_t> by_descending_score(std::size_t n, auto score_of) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score_of(a) > score_of(b); });
    return order;
}

}  // namespace

std::vector<Match> match_detections(const EvalSample& sample, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw Error(Errc::contract, "match IoU threshold must lie in (0, 1)");
    }
    const auto& preds = sample.predictions;
    const auto order = by_descending_score(preds.size(), [&](std::size_t i) { return preds[i].score; });
    std::vector<bool> used(sample.ground_truth.size(), false);
    std::vector<Match> out;
    out.reserve(preds.size());
    for (auto idx : order) {
        const auto& p = preds[idx];
        double best = -1.0;
        std::size_t best_gt = 0;
        for (std::size_t g = 0; g < sample.ground_truth.size(); ++g) {
            if (used[g] || sample.ground_truth[g].class_id != p.class_id) continue;
            const double o = iou(p.box, sample.ground_truth[g].box);
            if (o >= iou_threshold && o > best) {
                best = o;
                best_gt = g;
            }
        }
        if (best >= 0.0) used[best_gt] = true;
        out.push_back({idx, best >= 0.0});
    }
    return out;
}

std::vector<PrPoint> precision_recall(std::span<const ScoredMatch> matches, long num_gt) {
    const auto order = by_descending_score(matches.size(), [&](std::size_t i) { return matches[i].score; });
    std::vector<PrPoint> out;
    out.reserve(order.size());
    long tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        tp += matches[order[k]].true_positive ? 1 : 0;
        out.push_back({num_gt > 0 ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0,
                       static_cast<double>(tp) / static_cast<double>(k + 1)});
    }
    return out;
}

std::optional<double> average_precision(std::span<const ScoredMatch> matches, long num_gt,
                                        Interpolation mode) {
    if (num_gt <= 0) return std::nullopt;
    const auto curve = precision_recall(matches, num_gt);
    std::vector<double> precision(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) precision[i] = curve[i].precision;
    if (mode == Interpolation::all_point) {
        for (std::size_t i = precision.size(); i-- > 1;) {
            precision[i - 1] = std::max(precision[i - 1], precision[i]);
        }
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i].recall > prev_recall) {
            ap += (curve[i].recall - prev_recall) * precision[i];
            prev_recall = curve[i].recall;
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

EvalReport mean_average_precision(std::span<const EvalSample> samples, double iou_threshold,
                                  Interpolation mode) {
    EvalReport report;
    report.iou_threshold = iou_threshold;
    report.interpolation = mode;
    std::map<int, std::vector<ScoredMatch>> per_class;
    long total_gt = 0;
    for (int c = 0; c < kNumClasses; ++c) report.gt_counts[c] = 0;

    for (const auto& sample : samples) {
        for (const auto& g : sample.ground_truth) {
            ++report.gt_counts[g.class_id];
            ++total_gt;
        }
        for (const auto& m : match_detections(sample, iou_threshold)) {
            const auto& p = sample.predictions[m.prediction];
            per_class[p.class_id].push_back({p.score, m.true_positive});
        }
    }
    if (total_gt == 0) throw Error(Errc::contract, "evaluation needs at least one ground-truth box");

    double sum = 0.0;
    for (const auto& [cls, count] : report.gt_counts) {
        if (count == 0) continue;
        const auto& matches = per_class[cls];
        report.per_class_ap[cls] = *average_precision(matches, count, mode);
        report.pr_curves[cls] = precision_recall(matches, count);
        sum += report.per_class_ap[cls];
    }
    report.mean_ap = sum / static_cast<double>(report.per_class_ap.size());
    return report;
}

std::string format_ap(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", std::round(value * 1000.0) / 1000.0);
    return buf;
}

std::string_view interpolation_name(Interpolation mode) {
    return mode == Interpolation::step ? "step" : "all-point";
}

std::optional<Interpolation> parse_interpolation(std::string_view name) {
    if (name == "step") return Interpolation::step;
    if (name == "all-point" || name == "all_point") return Interpolation::all_point;
    return std::nullopt;
}

std::string format_report(const EvalReport& report, std::string_view method_name) {
    if (report.per_class_ap.empty()) throw Error(Errc::contract, "report has no evaluated classes");
    const std::size_t width = std::max<std::size_t>(32, method_name.size() + 2);
    const auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    std::string out;
    out += pad("Method", width) + "| Mean AP\n";
    out += std::string(width, '-') + "+--------\n";
    out += pad(std::string(method_name), width) + "| " + format_ap(report.mean_ap) + "\n\n";

    out += pad("Class", 10) + pad("Name", 34) + "     GT      AP\n";
    char num[64];
    for (const auto& [cls, ap] : report.per_class_ap) {
        const auto& label = label_for_id(cls);
        std::snprintf(num, sizeof num, "%7ld   %s\n", report.gt_counts.at(cls), format_ap(ap).c_str());
        out += pad(std::string(label.slug), 10) + pad(std::string(label.name_en), 34) + num;
    }
    std::snprintf(num, sizeof num, " (IoU %.2f, %s, %zu classes)\n", report.iou_threshold,
                  std::string(interpolation_name(report.interpolation)).c_str(), report.per_class_ap.size());
    out += "\nMean AP " + format_ap(report.mean_ap) + num;
    return out;
}

nlohmann::json report_to_json(const EvalReport& report, std::string_view method_name) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, ap] : report.per_class_ap) {
        const auto& label = label_for_id(cls);
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& p : report.pr_curves.at(cls)) curve.push_back({p.recall, p.precision});
        per_class[std::string(label.slug)] = {
            {"class_id", cls}, {"ap", ap}, {"gt_count", report.gt_counts.at(cls)}, {"pr_points", curve}};
    }
    return {{"method", method_name},
            {"mean_ap", report.mean_ap},
            {"mean_ap_rounded", format_ap(report.mean_ap)},
            {"iou_threshold", report.iou_threshold},
            {"interpolation", interpolation_name(report.interpolation)},
            {"per_class", per_class}};
}

}  // namespace tomato::eval
