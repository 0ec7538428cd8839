#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "tomato/error.hpp"
#include "tomato/server.hpp"

namespace tomato::server {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

std::string resolve_backend(const std::string& spec, const std::filesystem::path& base) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) return spec;
    return spec.substr(0, colon + 1) + resolve(spec.substr(colon + 1), base).string();
}

long parse_long(const char* name, const std::string& text) {
    try {
        std::size_t used = 0;
        const long v = std::stol(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(Errc::config, std::string(name) + " must be an integer, got '" + text + "'");
}

bool parse_bool(const char* name, const std::string& text) {
    if (text == "1" || text == "true" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "no" || text.empty()) return false;
    throw Error(Errc::config, std::string(name) + " must be a boolean, got '" + text + "'");
}

}  // namespace

void ServerConfig::validate() const {
    if (port < 0 || port > 65535) throw Error(Errc::config, "port must be in [0, 65535]");
    if (kb_path.empty()) throw Error(Errc::config, "kb_path is required");
    if (backend.empty()) throw Error(Errc::config, "backend is required");
    infer::BackendKind::parse(backend);
    if (feedback_log.empty()) throw Error(Errc::config, "feedback_log is required");
    if (max_upload_bytes == 0) throw Error(Errc::config, "max_upload_bytes must be positive");
    if (retain_images && image_store.empty()) throw Error(Errc::config, "retain_images needs image_store");
    if (!(conf_threshold >= 0.0 && conf_threshold < 1.0)) throw Error(Errc::config, "conf_threshold must be in [0, 1)");
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw Error(Errc::config, "iou_threshold must be in (0, 1)");
    if (latency_budget_ms <= 0) throw Error(Errc::config, "latency_budget_ms must be positive");
    if (threads < 1 || threads > 256) throw Error(Errc::config, "threads must be in [1, 256]");
}

ServerConfig config_from_json(const json& j, const std::filesystem::path& base) {
    static const std::set<std::string> known{
        "host", "port", "kb_path", "backend", "max_upload_bytes", "operator_token", "feedback_log",
        "retain_images", "image_store", "conf_threshold", "iou_threshold", "latency_budget_ms", "threads"};
    if (!j.is_object()) throw Error(Errc::config, "config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw Error(Errc::config, "unknown config key '" + key + "'");
    }
    ServerConfig c;
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.kb_path = resolve(j.value("kb_path", std::string()), base);
        c.backend = resolve_backend(j.value("backend", std::string()), base);
        c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
        c.operator_token = j.value("operator_token", std::string());
        c.feedback_log = resolve(j.value("feedback_log", std::string()), base);
        c.retain_images = j.value("retain_images", false);
        c.image_store = resolve(j.value("image_store", std::string()), base);
        c.conf_threshold = j.value("conf_threshold", c.conf_threshold);
        c.iou_threshold = j.value("iou_threshold", c.iou_threshold);
        c.latency_budget_ms = j.value("latency_budget_ms", c.latency_budget_ms);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw Error(Errc::config, std::string("bad config value: ") + e.what());
    }
    return c;
}

void apply_env_overrides(ServerConfig& c, const EnvLookup& env) {
    const auto get = [&](const char* name) -> std::optional<std::string> {
        const char* v = env(name);
        if (!v) return std::nullopt;
        return std::string(v);
    };
    if (auto v = get("TOMATO_HOST")) c.host = *v;
    if (auto v = get("TOMATO_PORT")) c.port = static_cast<int>(parse_long("TOMATO_PORT", *v));
    if (auto v = get("TOMATO_KB_PATH")) c.kb_path = *v;
    if (auto v = get("TOMATO_BACKEND")) c.backend = *v;
    if (auto v = get("TOMATO_MAX_UPLOAD_BYTES")) {
        const long n = parse_long("TOMATO_MAX_UPLOAD_BYTES", *v);
        if (n <= 0) throw Error(Errc::config, "TOMATO_MAX_UPLOAD_BYTES must be positive");
        c.max_upload_bytes = static_cast<std::size_t>(n);
    }
    if (auto v = get("TOMATO_OPERATOR_TOKEN")) c.operator_token = *v;
    if (auto v = get("TOMATO_FEEDBACK_LOG")) c.feedback_log = *v;
    if (auto v = get("TOMATO_RETAIN_IMAGES")) c.retain_images = parse_bool("TOMATO_RETAIN_IMAGES", *v);
    if (auto v = get("TOMATO_IMAGE_STORE")) c.image_store = *v;
}

ServerConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::config, "cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw Error(Errc::config, "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto c = config_from_json(j, path.parent_path());
    apply_env_overrides(c, env);
    c.validate();
    return c;
}

ServerConfig load_config(const std::filesystem::path& path) {
    return load_config(path, [](const char* name) { return std::getenv(name); });
}

int http_status(Errc code) {
    switch (code) {
        case Errc::input:
        case Errc::validation:
        case Errc::format: return 400;
        case Errc::unauthorized: return 401;
        case Errc::not_found:
        case Errc::no_remedy_defined: return 404;
        case Errc::payload_too_large: return 413;
        case Errc::backend:
        case Errc::shape_mismatch:
        case Errc::storage:
        case Errc::load:
        case Errc::config: return 503;
        case Errc::contract: return 500;
    }
    return 500;
}

json error_json(Errc code, const std::string& message) {
    return {{"error", {{"code", std::string(errc_name(code))}, {"message", message}}}};
}

json advisory_response(const std::string& request_id, const Snapshot& snap, const infer::PipelineResult& result,
                       int image_w, int image_h, kb::Lang lang) {
    json detections = json::array();
    json remedies = json::array();
    std::set<int> seen;
    for (const auto& d : result.detections) {
        const auto& label = d.label();
        detections.push_back({{"slug", std::string(label.slug)},
                              {"class_id", d.class_id},
                              {"name_ne", std::string(label.name_ne)},
                              {"name_en", std::string(label.name_en)},
                              {"score", d.score},
                              {"box", {{"cx", d.box.cx}, {"cy", d.box.cy}, {"w", d.box.w}, {"h", d.box.h}}}});
        if (!seen.insert(d.class_id).second) continue;
        try {
            remedies.push_back(to_json(kb::lookup(*snap.kb, label.slug, lang)));
        } catch (const Error& e) {
            remedies.push_back({{"slug", std::string(label.slug)},
                                {"no_remedy_defined", true},
                                {"code", std::string(errc_name(e.code()))}});
        }
    }
    return {{"request_id", request_id},
            {"model_version", snap.backend->descriptor().model_version},
            {"kb_version", snap.kb->version},
            {"lang", std::string(kb::lang_code(lang))},
            {"image", {{"width", image_w}, {"height", image_h}, {"hash", result.input_hash}}},
            {"detections", detections},
            {"remedies", remedies}};
}

AdvisoryService::AdvisoryService(ServerConfig config)
    : AdvisoryService(config, kb::load_kb(config.kb_path),
                      infer::load_backend(infer::BackendKind::parse(config.backend))) {}

AdvisoryService::AdvisoryService(ServerConfig config, kb::KnowledgeBase kb, infer::BackendPtr backend)
    : config_(std::move(config)) {
    if (!backend) throw Error(Errc::config, "no backend");
    snap_ = std::make_shared<const Snapshot>(
        Snapshot{std::make_shared<const kb::KnowledgeBase>(std::move(kb)), std::move(backend)});
    log_ = std::make_unique<FeedbackLog>(config_.feedback_log);
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%llx",
                  static_cast<unsigned long long>(std::chrono::duration_cast<std::chrono::milliseconds>(now).count()));
    request_prefix_ = buf;
}

std::shared_ptr<const Snapshot> AdvisoryService::snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
}

void AdvisoryService::replace_kb(kb::KnowledgeBase kb) {
    auto fresh = std::make_shared<const kb::KnowledgeBase>(std::move(kb));
    std::lock_guard lock(snap_mu_);
    snap_ = std::make_shared<const Snapshot>(Snapshot{std::move(fresh), snap_->backend});
}

void AdvisoryService::replace_backend(infer::BackendPtr backend) {
    if (!backend) throw Error(Errc::config, "no backend");
    std::lock_guard lock(snap_mu_);
    snap_ = std::make_shared<const Snapshot>(Snapshot{snap_->kb, std::move(backend)});
}

void AdvisoryService::reload() {
    // Load both before swapping so a failure leaves the old snapshot intact.
    std::shared_ptr<const kb::KnowledgeBase> kb;
    infer::BackendPtr backend;
    try {
        kb = std::make_shared<const kb::KnowledgeBase>(kb::load_kb(config_.kb_path));
        backend = infer::load_backend(infer::BackendKind::parse(config_.backend));
    } catch (const Error& e) {
        throw Error(Errc::load, std::string("reload failed, keeping current snapshot: ") + e.what());
    }
    std::lock_guard lock(snap_mu_);
    snap_ = std::make_shared<const Snapshot>(Snapshot{std::move(kb), std::move(backend)});
}

std::string AdvisoryService::next_request_id() {
    return "req-" + request_prefix_ + "-" + std::to_string(++request_seq_);
}

void AdvisoryService::retain(std::span<const std::uint8_t> bytes) const {
    const auto name = content_hash(bytes);
    const auto target = config_.image_store / (name + ".img");
    std::error_code ec;
    if (std::filesystem::exists(target, ec)) return;
    std::filesystem::create_directories(config_.image_store, ec);
    const auto tmp = config_.image_store /
                     (name + ".img.tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(Errc::storage, "cannot write retained image");
    }
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw Error(Errc::storage, "cannot store retained image: " + ec.message());
}

json AdvisoryService::detect(std::span<const std::uint8_t> bytes, const DetectParams& params) {
    const auto start = std::chrono::steady_clock::now();
    if (bytes.size() > config_.max_upload_bytes) {
        throw Error(Errc::payload_too_large, "image is " + std::to_string(bytes.size()) + " bytes, limit is " +
                                                 std::to_string(config_.max_upload_bytes));
    }
    if (bytes.empty()) throw Error(Errc::input, "no image in request");
    const double conf = params.conf_threshold.value_or(config_.conf_threshold);
    if (!(conf >= 0.0 && conf < 1.0)) throw Error(Errc::validation, "conf_threshold must be in [0, 1)");

    const Image image = decode_image(bytes);
    const auto snap = snapshot();
    infer::PipelineResult result;
    try {
        result = infer::run_pipeline(*snap->backend, image, conf, config_.iou_threshold);
    } catch (const Error& e) {
        if (e.code() == Errc::input) throw;
        throw Error(Errc::backend, std::string("inference failed: ") + e.what());
    } catch (const std::exception& e) {
        throw Error(Errc::backend, std::string("inference failed: ") + e.what());
    }
    auto body = advisory_response(next_request_id(), *snap, result, image.width, image.height, params.lang);
    if (config_.retain_images) retain(bytes);

    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    if (elapsed.count() > config_.latency_budget_ms) {
        std::fprintf(stderr, "detect %s took %lld ms, budget %d ms\n", body["request_id"].get<std::string>().c_str(),
                     static_cast<long long>(elapsed.count()), config_.latency_budget_ms);
    }
    return body;
}

RemedyReply AdvisoryService::remedy(const std::string& slug, kb::Lang lang) const {
    const auto snap = snapshot();
    RemedyReply r;
    r.body = to_json(kb::lookup(*snap->kb, slug, lang));
    r.kb_version = snap->kb->version;
    r.etag = "\"kb" + std::to_string(r.kb_version) + "-" + slug + "-" + std::string(kb::lang_code(lang)) + "\"";
    return r;
}

json AdvisoryService::kb_version() const { return {{"version", snapshot()->kb->version}}; }

json AdvisoryService::kb_delta(std::int64_t since) const {
    if (since < 0) throw Error(Errc::validation, "since must be a non-negative integer");
    return to_json(kb::kb_delta(*snapshot()->kb, static_cast<long>(since)));
}

json AdvisoryService::submit_feedback(const json& submission) {
    auto record = log_->append(feedback_from_submission(submission));
    return {{"id", record.id}, {"timestamp", format_timestamp(record.timestamp_ms)}};
}

std::vector<FeedbackRecord> AdvisoryService::export_feedback(std::int64_t since_ms) const {
    return log_->read_since(since_ms);
}

bool AdvisoryService::authorized(const std::string& header) const {
    if (config_.operator_token.empty()) return false;
    const std::string expected = "Bearer " + config_.operator_token;
    if (header.size() != expected.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < header.size(); ++i) {
        diff |= static_cast<unsigned char>(header[i] ^ expected[i]);
    }
    return diff == 0;
}

}  // namespace tomato::server
