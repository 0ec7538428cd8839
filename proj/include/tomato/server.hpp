#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"
#include "tomato/feedback.hpp"
#include "tomato/inference.hpp"
#include "tomato/knowledge_base.hpp"

namespace tomato::server {

inline constexpr std::size_t kDefaultMaxUpload = 10u << 20;

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::filesystem::path kb_path;
    std::string backend;  // "stub:<fixture>" or "external:<descriptor>"
    std::size_t max_upload_bytes = kDefaultMaxUpload;
    std::string operator_token;  // empty disables export and reload
    std::filesystem::path feedback_log;
    bool retain_images = false;
    std::filesystem::path image_store;  // required when retain_images is set
    double conf_threshold = kDefaultConfThreshold;
    double iou_threshold = kDefaultNmsIouThreshold;
    int latency_budget_ms = 2000;
    int threads = 8;

    // Throws Error(config) on missing or out-of-range settings.
    void validate() const;
};

using EnvLookup = std::function<const char*(const char*)>;

// Relative paths in the file resolve against the file's directory.
ServerConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
// TOMATO_HOST, TOMATO_PORT, TOMATO_KB_PATH, TOMATO_BACKEND, TOMATO_MAX_UPLOAD_BYTES,
// TOMATO_OPERATOR_TOKEN, TOMATO_FEEDBACK_LOG, TOMATO_RETAIN_IMAGES, TOMATO_IMAGE_STORE.
void apply_env_overrides(ServerConfig& config, const EnvLookup& env);
// Reads the file, applies the process environment and validates.
// Throws Error(config).
ServerConfig load_config(const std::filesystem::path& path);
ServerConfig load_config(const std::filesystem::path& path, const EnvLookup& env);

// HTTP status class for an error code.
int http_status(Errc code);
nlohmann::json error_json(Errc code, const std::string& message);

struct Snapshot {
    std::shared_ptr<const kb::KnowledgeBase> kb;
    infer::BackendPtr backend;
};

struct DetectParams {
    std::optional<double> conf_threshold;
    kb::Lang lang = kb::Lang::ne;
};

struct RemedyReply {
    nlohmann::json body;
    std::int64_t kb_version = 0;
    std::string etag;
};

class AdvisoryService {
public:
    // Loads the KB, the backend and the feedback log named by the config.
    explicit AdvisoryService(ServerConfig config);
    // For tests: explicit snapshot parts, no files beyond the feedback log.
    AdvisoryService(ServerConfig config, kb::KnowledgeBase kb, infer::BackendPtr backend);

    const ServerConfig& config() const { return config_; }
    std::shared_ptr<const Snapshot> snapshot() const;

    // Readers holding the old snapshot finish against it; new calls see the new one.
    void replace_kb(kb::KnowledgeBase kb);
    void replace_backend(infer::BackendPtr backend);
    // Reloads the KB file and backend from the config paths. On failure the
    // current snapshot is kept and the error rethrown.
    void reload();

    nlohmann::json detect(std::span<const std::uint8_t> image_bytes, const DetectParams& params);
    RemedyReply remedy(const std::string& slug, kb::Lang lang) const;
    nlohmann::json kb_version() const;
    nlohmann::json kb_delta(std::int64_t since) const;
    nlohmann::json submit_feedback(const nlohmann::json& submission);
    std::vector<FeedbackRecord> export_feedback(std::int64_t since_ms) const;
    bool authorized(const std::string& authorization_header) const;

    FeedbackLog& feedback_log() { return *log_; }

private:
    std::string next_request_id();
    void retain(std::span<const std::uint8_t> bytes) const;

    ServerConfig config_;
    mutable std::mutex snap_mu_;
    std::shared_ptr<const Snapshot> snap_;
    std::unique_ptr<FeedbackLog> log_;
    std::atomic<std::uint64_t> request_seq_{0};
    std::string request_prefix_;
};

// Builds the AdvisoryResponse body from pipeline output and one snapshot.
nlohmann::json advisory_response(const std::string& request_id, const Snapshot& snap,
                                 const infer::PipelineResult& result, int image_w, int image_h,
                                 kb::Lang lang);

// /api/v1 routes over an AdvisoryService.
class HttpServer {
public:
    explicit HttpServer(AdvisoryService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Returns the bound port. Throws Error(config) when binding fails.
    int bind();
    // Blocks until stop().
    void listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tomato::server
