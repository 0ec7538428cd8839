#include "tomato/inference.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "tomato/error.hpp"

namespace tomato::infer {

using nlohmann::json;

bool ScaleSpec::operator==(const ScaleSpec& o) const {
    if (grid_w != o.grid_w || grid_h != o.grid_h || anchors.size() != o.anchors.size()) return false;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i].w != o.anchors[i].w || anchors[i].h != o.anchors[i].h) return false;
    }
    return true;
}

void ModelDescriptor::validate() const {
    if (num_classes != kNumClasses) {
        throw Error(Errc::config, "model declares " + std::to_string(num_classes) +
                                      " classes, expected " + std::to_string(kNumClasses));
    }
    if (scales.empty()) throw Error(Errc::config, "model declares no output scales");
    if (input_w <= 0 || input_h <= 0) throw Error(Errc::config, "model input size must be positive");
    for (const auto& s : scales) {
        if (s.grid_w <= 0 || s.grid_h <= 0 || s.anchors.empty()) {
            throw Error(Errc::config, "scale needs a positive grid and at least one anchor");
        }
        for (const auto& a : s.anchors) {
            if (!(a.w > 0.0) || !(a.h > 0.0)) throw Error(Errc::config, "anchor sizes must be positive");
        }
    }
}

RawHeadOutput ModelDescriptor::empty_heads() const {
    RawHeadOutput out;
    for (const auto& s : scales) {
        HeadScale h;
        h.grid_w = s.grid_w;
        h.grid_h = s.grid_h;
        h.anchors = s.anchors;
        h.num_classes = num_classes;
        h.logits.assign(h.expected_size(), 0.0f);
        out.push_back(std::move(h));
    }
    return out;
}

ModelDescriptor descriptor_from_json(const json& j) {
    try {
        ModelDescriptor d;
        d.model_version = j.at("model_version").get<std::string>();
        d.input_w = j.at("input").at("width").get<int>();
        d.input_h = j.at("input").at("height").get<int>();
        d.num_classes = j.at("num_classes").get<int>();
        for (const auto& s : j.at("scales")) {
            ScaleSpec spec;
            spec.grid_w = s.at("grid_w").get<int>();
            spec.grid_h = s.at("grid_h").get<int>();
            for (const auto& a : s.at("anchors")) {
                spec.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
            }
            d.scales.push_back(std::move(spec));
        }
        return d;
    } catch (const json::exception& e) {
        throw Error(Errc::load, std::string("malformed model descriptor: ") + e.what());
    }
}

json to_json(const ModelDescriptor& d) {
    json scales = json::array();
    for (const auto& s : d.scales) {
        json anchors = json::array();
        for (const auto& a : s.anchors) anchors.push_back({a.w, a.h});
        scales.push_back({{"grid_w", s.grid_w}, {"grid_h", s.grid_h}, {"anchors", anchors}});
    }
    return {{"model_version", d.model_version},
            {"input", {{"width", d.input_w}, {"height", d.input_h}}},
            {"num_classes", d.num_classes},
            {"scales", scales}};
}

BackendKind BackendKind::parse(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos || colon + 1 == spec.size()) {
        throw Error(Errc::config, "backend must be 'stub:<fixture>' or 'external:<descriptor>', got '" + spec + "'");
    }
    const auto type = spec.substr(0, colon);
    BackendKind k;
    k.path = spec.substr(colon + 1);
    if (type == "stub") {
        k.type = BackendType::stub;
    } else if (type == "external") {
        k.type = BackendType::external;
    } else {
        throw Error(Errc::config, "unknown backend type '" + type + "'");
    }
    return k;
}

std::string BackendKind::to_string() const {
    return (type == BackendType::stub ? "stub:" : "external:") + path.string();
}

Backend::Backend(ModelDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    descriptor_.validate();
}

InferenceResult Backend::infer(const Image& image) const {
    if (image.empty() || image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw Error(Errc::input, "image is empty or malformed");
    }
    InferenceResult r;
    r.mapping = letterbox(image.width, image.height, descriptor_.input_w, descriptor_.input_h);
    const Image boxed = letterbox_image(image, r.mapping);
    r.input_hash = content_hash(boxed);
    r.heads = run(boxed, r.input_hash);
    if (r.heads.size() != descriptor_.scales.size()) {
        throw Error(Errc::shape_mismatch, "backend returned " + std::to_string(r.heads.size()) +
                                              " scales, descriptor has " +
                                              std::to_string(descriptor_.scales.size()));
    }
    for (std::size_t i = 0; i < r.heads.size(); ++i) {
        const auto& h = r.heads[i];
        const auto& s = descriptor_.scales[i];
        if (h.grid_w != s.grid_w || h.grid_h != s.grid_h || h.anchors.size() != s.anchors.size() ||
            h.num_classes != descriptor_.num_classes) {
            throw Error(Errc::shape_mismatch, "scale " + std::to_string(i) + " disagrees with the descriptor");
        }
        check_shape(h);
    }
    return r;
}

RawHeadOutput StubFixture::background_heads() const {
    auto heads = descriptor.empty_heads();
    for (auto& h : heads) {
        for (std::size_t i = 4; i < h.logits.size(); i += h.stride()) h.logits[i] = background_objectness;
    }
    return heads;
}

json detection_to_json(const Detection& d) {
    return {{"class_id", d.class_id},
            {"slug", std::string(label_for_id(d.class_id).slug)},
            {"score", d.score},
            {"box", {{"cx", d.box.cx}, {"cy", d.box.cy}, {"w", d.box.w}, {"h", d.box.h}}}};
}

Detection detection_from_json(const json& j) {
    Detection d;
    const auto slug = j.at("slug").get<std::string>();
    const auto label = find_label(slug);
    if (!label) throw Error(Errc::format, "unknown class slug '" + slug + "'");
    d.class_id = label->id;
    if (j.contains("class_id") && j.at("class_id").get<int>() != d.class_id) {
        throw Error(Errc::format, "class_id disagrees with slug '" + slug + "'");
    }
    d.score = j.at("score").get<double>();
    const auto& b = j.at("box");
    d.box = {b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("w").get<double>(),
             b.at("h").get<double>()};
    return d;
}

StubFixture parse_fixture(const json& j) {
    StubFixture f;
    f.descriptor = descriptor_from_json(j);
    f.descriptor.validate();
    try {
        f.background_objectness = j.value("background_objectness", -20.0f);
        f.conf_threshold = j.value("conf_threshold", kDefaultConfThreshold);
        f.iou_threshold = j.value("iou_threshold", kDefaultNmsIouThreshold);
        for (const auto& e : j.value("entries", json::array())) {
            FixtureEntry entry;
            entry.name = e.at("name").get<std::string>();
            entry.image = e.value("image", "");
            entry.image_hash = e.at("image_hash").get<std::string>();
            const auto& heads = e.at("heads");
            if (heads.size() != f.descriptor.scales.size()) {
                throw Error(Errc::load, "fixture entry '" + entry.name + "' has the wrong number of heads");
            }
            entry.heads = f.descriptor.empty_heads();
            for (std::size_t i = 0; i < heads.size(); ++i) {
                auto values = heads[i].at("logits").get<std::vector<float>>();
                if (values.size() != entry.heads[i].expected_size()) {
                    throw Error(Errc::load, "fixture entry '" + entry.name + "' head " + std::to_string(i) +
                                                " has " + std::to_string(values.size()) + " logits, expected " +
                                                std::to_string(entry.heads[i].expected_size()));
                }
                entry.heads[i].logits = std::move(values);
            }
            for (const auto& d : e.value("expected", json::array())) entry.expected.push_back(detection_from_json(d));
            for (const auto& d : e.value("expected_original", json::array())) {
                entry.expected_original.push_back(detection_from_json(d));
            }
            f.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::load, std::string("malformed stub fixture: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::load) throw;
        throw Error(Errc::load, std::string("malformed stub fixture: ") + e.what());
    }
    return f;
}

namespace {

json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::load, std::string("cannot open ") + what + " '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw Error(Errc::load, std::string("corrupt ") + what + " '" + path.string() + "': " + e.what());
    }
}

}  // namespace

StubFixture load_fixture(const std::filesystem::path& path) {
    return parse_fixture(read_json_file(path, "stub fixture"));
}

json to_json(const StubFixture& f) {
    json j = to_json(f.descriptor);
    j["background_objectness"] = f.background_objectness;
    j["conf_threshold"] = f.conf_threshold;
    j["iou_threshold"] = f.iou_threshold;
    json entries = json::array();
    for (const auto& e : f.entries) {
        json heads = json::array();
        for (const auto& h : e.heads) heads.push_back({{"logits", h.logits}});
        json expected = json::array();
        for (const auto& d : e.expected) expected.push_back(detection_to_json(d));
        json original = json::array();
        for (const auto& d : e.expected_original) original.push_back(detection_to_json(d));
        entries.push_back({{"name", e.name},
                           {"image", e.image},
                           {"image_hash", e.image_hash},
                           {"heads", heads},
                           {"expected", expected},
                           {"expected_original", original}});
    }
    j["entries"] = entries;
    return j;
}

namespace {

class StubBackend final : public Backend {
public:
    explicit StubBackend(StubFixture fixture)
        : Backend(fixture.descriptor), background_(fixture.background_heads()) {
        for (auto& e : fixture.entries) table_.emplace(e.image_hash, std::move(e.heads));
    }

protected:
    RawHeadOutput run(const Image&, const std::string& hash) const override {
        const auto it = table_.find(hash);
        return it == table_.end() ? background_ : it->second;
    }

private:
    RawHeadOutput background_;
    std::unordered_map<std::string, RawHeadOutput> table_;
};

}  // namespace

// Defined in onnx_backend.cpp.
BackendPtr load_external_backend(const std::filesystem::path& descriptor_path);

BackendPtr load_backend(const BackendKind& kind) {
    if (kind.type == BackendType::external) return load_external_backend(kind.path);
    auto fixture = load_fixture(kind.path);
    return std::make_shared<StubBackend>(std::move(fixture));
}

PipelineResult run_pipeline(const Backend& backend, const Image& image, double conf_threshold,
                            double iou_threshold) {
    auto inferred = backend.infer(image);
    const auto kept = non_max_suppression(decode_head(inferred.heads, conf_threshold), iou_threshold);
    PipelineResult out;
    out.mapping = inferred.mapping;
    out.input_hash = std::move(inferred.input_hash);
    for (auto d : kept) {
        d.box = map_box_to_original(d.box, out.mapping);
        if (d.box.w < kMinDecodedSide || d.box.h < kMinDecodedSide) continue;
        out.detections.push_back(d);
    }
    return out;
}

}  // namespace tomato::infer
