#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomato/detection.hpp"
#include "tomato/image.hpp"
#include "tomato/letterbox.hpp"

namespace tomato::infer {

struct ScaleSpec {
    int grid_w = 0;
    int grid_h = 0;
    std::vector<Anchor> anchors;

    bool operator==(const ScaleSpec& o) const;
};

struct ModelDescriptor {
    std::string model_version;
    int input_w = 0;
    int input_h = 0;
    std::vector<ScaleSpec> scales;
    int num_classes = kNumClasses;

    // Throws Error(config) on a class count other than 10, no scales or bad sizes.
    void validate() const;
    // A correctly shaped all-zero head tensor for every scale.
    RawHeadOutput empty_heads() const;
};

ModelDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelDescriptor& d);

enum class BackendType { stub, external };

struct BackendKind {
    BackendType type = BackendType::stub;
    std::filesystem::path path;

    // "stub:<path>" or "external:<path>".
    static BackendKind parse(const std::string& spec);
    std::string to_string() const;
};

struct InferenceResult {
    RawHeadOutput heads;
    LetterboxMapping mapping;
    std::string input_hash;  // content hash of the letterboxed image
};

class Backend {
public:
    explicit Backend(ModelDescriptor descriptor);
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    const ModelDescriptor& descriptor() const { return descriptor_; }

    // Letterboxes, runs the model and checks every head against the descriptor.
    // Safe to call concurrently.
    InferenceResult infer(const Image& image) const;

protected:
    virtual RawHeadOutput run(const Image& letterboxed, const std::string& hash) const = 0;

private:
    ModelDescriptor descriptor_;
};

using BackendPtr = std::shared_ptr<const Backend>;

// Throws Error(load) on missing or corrupt artifacts, Error(config) on a
// descriptor that does not describe the 10-class head.
BackendPtr load_backend(const BackendKind& kind);

// Stub fixture: letterboxed-image hash to logits plus the detections the
// pipeline is expected to produce for them.
struct FixtureEntry {
    std::string name;
    std::string image;  // file name relative to the fixture, informational
    std::string image_hash;
    RawHeadOutput heads;
    std::vector<Detection> expected;           // model input coordinates
    std::vector<Detection> expected_original;  // source image coordinates
};

struct StubFixture {
    ModelDescriptor descriptor;
    float background_objectness = -20.0f;
    double conf_threshold = kDefaultConfThreshold;
    double iou_threshold = kDefaultNmsIouThreshold;
    std::vector<FixtureEntry> entries;

    // Logits for an unregistered image: objectness at the background value,
    // everything else zero.
    RawHeadOutput background_heads() const;
};

StubFixture parse_fixture(const nlohmann::json& j);
StubFixture load_fixture(const std::filesystem::path& path);
nlohmann::json to_json(const StubFixture& fixture);

nlohmann::json detection_to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);

struct PipelineResult {
    std::vector<Detection> detections;  // original image coordinates
    LetterboxMapping mapping;
    std::string input_hash;
};

// infer, decode_head, non_max_suppression, map_box_to_original. Boxes that
// collapse below the minimum side after mapping are dropped.
PipelineResult run_pipeline(const Backend& backend, const Image& image,
                            double conf_threshold = kDefaultConfThreshold,
                            double iou_threshold = kDefaultNmsIouThreshold);

}  // namespace tomato::infer
