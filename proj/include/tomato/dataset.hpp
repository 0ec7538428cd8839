#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tomato/detection.hpp"
#include "tomato/error.hpp"
#include "tomato/geometry.hpp"

namespace tomato::data {

// Format error that names the offending line (1-based).
class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(Errc::format, source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Annotation text: one "class_id cx cy w h" line per object, normalized.
// Trailing blank lines are tolerated; anything else malformed is rejected.
std::vector<LabeledBox> parse_annotation_text(std::string_view text, const std::string& source = "<text>");
std::vector<LabeledBox> parse_annotations(const std::filesystem::path& path);

// Canonical form: six decimals, period separator, '\n' line endings.
std::string serialize_annotations(std::span<const LabeledBox> boxes);
void write_annotations(const std::filesystem::path& path, std::span<const LabeledBox> boxes);

// Prediction text: "class_id cx cy w h score" per line.
std::vector<Detection> parse_prediction_text(std::string_view text, const std::string& source = "<text>");
std::vector<Detection> parse_predictions(const std::filesystem::path& path);
std::string serialize_predictions(std::span<const Detection> dets);

bool is_image_file(const std::filesystem::path& path);

struct DatasetStats {
    std::array<long, kNumClasses> object_counts{};
    long image_count = 0;
    long object_count = 0;
    // max class count / min nonzero class count; 0 when there are no objects.
    double imbalance_ratio = 0.0;
    std::vector<std::string> warnings;
};

// Walks <root>/images and <root>/labels (paired by basename), in sorted order.
// Orphan annotations are reported in warnings and not counted.
DatasetStats compute_stats(const std::filesystem::path& root);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitManifests {
    std::vector<std::string> train;  // sorted paths relative to the dataset root
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Seeded Fisher-Yates shuffle of the sorted image list, then bucket sizes
// floor(n * ratio) with the remainder handed out one at a time to buckets
// with nonzero ratio, in train/val/test order.
SplitManifests split_dataset(const std::filesystem::path& root, const SplitRatios& ratios,
                             std::uint64_t seed);
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);
void write_manifests(const std::filesystem::path& out_dir, const SplitManifests& m);

}  // namespace tomato::data
