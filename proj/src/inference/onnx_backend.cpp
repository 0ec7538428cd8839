#include <fstream>
#include <mutex>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "tomato/error.hpp"
#include "tomato/inference.hpp"

namespace tomato::infer {

namespace {

// Runs an ONNX graph through OpenCV's DNN module. The graph takes a
// 1x3xHxW float RGB tensor in [0,1] and returns one tensor per scale whose
// flattened order is [grid_h][grid_w][anchor][5 + classes].
class OnnxBackend final : public Backend {
public:
    OnnxBackend(ModelDescriptor d, cv::dnn::Net net, std::vector<std::string> outputs)
        : Backend(std::move(d)), net_(std::move(net)), outputs_(std::move(outputs)) {}

protected:
    RawHeadOutput run(const Image& boxed, const std::string&) const override {
        cv::Mat rgb(boxed.height, boxed.width, CV_8UC3, const_cast<std::uint8_t*>(boxed.pixels.data()));
        const cv::Mat blob = cv::dnn::blobFromImage(rgb, 1.0 / 255.0, cv::Size(), cv::Scalar(), false, false, CV_32F);
        std::vector<cv::Mat> produced;
        try {
            std::lock_guard lock(mu_);
            net_.setInput(blob);
            net_.forward(produced, outputs_);
        } catch (const cv::Exception& e) {
            throw Error(Errc::backend, std::string("model execution failed: ") + e.what());
        }
        auto heads = descriptor().empty_heads();
        if (produced.size() != heads.size()) {
            throw Error(Errc::shape_mismatch, "model produced " + std::to_string(produced.size()) + " outputs");
        }
        for (std::size_t i = 0; i < heads.size(); ++i) {
            cv::Mat m = produced[i].isContinuous() ? produced[i] : produced[i].clone();
            if (m.depth() != CV_32F || m.total() * static_cast<std::size_t>(m.channels()) != heads[i].expected_size()) {
                throw Error(Errc::shape_mismatch, "output " + std::to_string(i) + " has " +
                                                      std::to_string(m.total()) + " values, expected " +
                                                      std::to_string(heads[i].expected_size()));
            }
            const auto* p = m.ptr<float>();
            heads[i].logits.assign(p, p + heads[i].expected_size());
        }
        return heads;
    }

private:
    mutable std::mutex mu_;  // cv::dnn::Net::forward mutates internal buffers
    mutable cv::dnn::Net net_;
    std::vector<std::string> outputs_;
};

}  // namespace

BackendPtr load_external_backend(const std::filesystem::path& descriptor_path) {
    std::ifstream in(descriptor_path, std::ios::binary);
    if (!in) throw Error(Errc::load, "cannot open model descriptor '" + descriptor_path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::load, "corrupt model descriptor '" + descriptor_path.string() + "': " + e.what());
    }
    auto d = descriptor_from_json(j);
    d.validate();

    std::filesystem::path model;
    std::vector<std::string> outputs;
    try {
        model = j.at("model").get<std::string>();
        outputs = j.value("outputs", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::load, std::string("malformed model descriptor: ") + e.what());
    }
    if (model.is_relative()) model = descriptor_path.parent_path() / model;
    if (!std::filesystem::is_regular_file(model)) {
        throw Error(Errc::load, "model artifact '" + model.string() + "' does not exist");
    }
    cv::dnn::Net net;
    try {
        net = cv::dnn::readNetFromONNX(model.string());
    } catch (const cv::Exception& e) {
        throw Error(Errc::load, "cannot load model artifact '" + model.string() + "': " + e.what());
    }
    if (net.empty()) throw Error(Errc::load, "model artifact '" + model.string() + "' is empty");
    if (outputs.empty()) outputs = net.getUnconnectedOutLayersNames();
    if (outputs.size() != d.scales.size()) {
        throw Error(Errc::config, "model has " + std::to_string(outputs.size()) + " outputs, descriptor declares " +
                                      std::to_string(d.scales.size()) + " scales");
    }
    return std::make_shared<OnnxBackend>(std::move(d), std::move(net), std::move(outputs));
}

}  // namespace tomato::infer
