#include <algorithm>
#include <atomic>

#include "httplib.h"
#include "tomato/error.hpp"
#include "tomato/server.hpp"

namespace tomato::server {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json; charset=utf-8";

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, Errc code, const std::string& message) {
    send_json(res, http_status(code), error_json(code, message));
}

kb::Lang lang_param(const httplib::Request& req) {
    if (!req.has_param("lang")) return kb::Lang::ne;
    const auto v = req.get_param_value("lang");
    const auto lang = kb::parse_lang(v);
    if (!lang) throw Error(Errc::validation, "lang must be 'ne' or 'en', got '" + v + "'");
    return *lang;
}

std::optional<double> conf_param(const httplib::Request& req) {
    const char* key = req.has_param("conf_threshold") ? "conf_threshold" : req.has_param("conf") ? "conf" : nullptr;
    if (!key) return std::nullopt;
    const auto v = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(Errc::validation, std::string(key) + " must be a number, got '" + v + "'");
}

std::int64_t since_version(const httplib::Request& req) {
    if (!req.has_param("since")) throw Error(Errc::validation, "since is required");
    const auto v = req.get_param_value("since");
    if (v.empty() || v.size() > 18 || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw Error(Errc::validation, "since must be a non-negative integer, got '" + v + "'");
    }
    return std::stoll(v);
}

// Wraps a route so domain errors become JSON error bodies.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const std::exception& e) {
            send_error(res, Errc::contract, std::string("internal error: ") + e.what());
        }
    };
}

}  // namespace

struct HttpServer::Impl {
    AdvisoryService& svc;
    httplib::Server http;
    std::atomic<bool> bound{false};

    explicit Impl(AdvisoryService& s) : svc(s) {
        const auto& cfg = svc.config();
        const auto threads = static_cast<std::size_t>(cfg.threads);
        http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
        // Room for multipart framing; oversized images are rejected by the route
        // with a JSON body instead of the connection being cut early.
        http.set_payload_max_length(cfg.max_upload_bytes * 2 + (1u << 20));
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            if (res.status == 413) {
                send_error(res, Errc::payload_too_large, "request body exceeds the upload limit");
            } else if (res.status == 404) {
                send_error(res, Errc::not_found, "no such endpoint");
            } else {
                send_json(res, res.status, error_json(Errc::validation, "request rejected"));
            }
        });
        http.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.status = 204;
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization, If-None-Match");
        });

        http.Post("/api/v1/detect", guarded([this](const httplib::Request& req, httplib::Response& res) {
            DetectParams p;
            p.conf_threshold = conf_param(req);
            p.lang = lang_param(req);
            const std::string* bytes = &req.body;
            std::string file;
            if (req.is_multipart_form_data()) {
                if (!req.has_file("image")) throw Error(Errc::input, "multipart upload needs an 'image' field");
                file = req.get_file_value("image").content;
                bytes = &file;
            }
            const auto start = std::chrono::steady_clock::now();
            const auto body = svc.detect(
                {reinterpret_cast<const std::uint8_t*>(bytes->data()), bytes->size()}, p);
            const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
            res.set_header("X-Elapsed-Ms", std::to_string(ms.count()));
            res.set_header("X-KB-Version", std::to_string(body["kb_version"].get<long>()));
            send_json(res, 200, body);
        }));

        http.Get(R"(/api/v1/remedies/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto reply = svc.remedy(req.matches[1].str(), lang_param(req));
            res.set_header("Cache-Control", "public, max-age=300");
            res.set_header("ETag", reply.etag);
            res.set_header("X-KB-Version", std::to_string(reply.kb_version));
            if (req.get_header_value("If-None-Match") == reply.etag) {
                res.status = 304;
                return;
            }
            send_json(res, 200, reply.body);
        }));

        http.Get("/api/v1/kb/version", guarded([this](const httplib::Request&, httplib::Response& res) {
            res.set_header("Cache-Control", "no-cache");
            send_json(res, 200, svc.kb_version());
        }));

        http.Get("/api/v1/kb/delta", guarded([this](const httplib::Request& req, httplib::Response& res) {
            res.set_header("Cache-Control", "no-cache");
            send_json(res, 200, svc.kb_delta(since_version(req)));
        }));

        http.Post("/api/v1/feedback", guarded([this](const httplib::Request& req, httplib::Response& res) {
            json submission;
            try {
                submission = json::parse(req.body);
            } catch (const json::parse_error& e) {
                throw Error(Errc::validation, std::string("feedback body is not JSON: ") + e.what());
            }
            send_json(res, 201, svc.submit_feedback(submission));
        }));

        http.Get("/api/v1/feedback/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!svc.authorized(req.get_header_value("Authorization"))) {
                res.set_header("WWW-Authenticate", "Bearer");
                throw Error(Errc::unauthorized, "operator token required");
            }
            std::int64_t since = 0;
            if (req.has_param("since")) {
                const auto t = parse_timestamp(req.get_param_value("since"));
                if (!t) throw Error(Errc::validation, "since must be an RFC 3339 UTC time or epoch milliseconds");
                since = *t;
            }
            std::string body;
            for (const auto& r : svc.export_feedback(since)) body += to_json(r).dump() + "\n";
            res.status = 200;
            res.set_content(body, "application/x-ndjson; charset=utf-8");
        }));

        http.Post("/api/v1/admin/reload", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!svc.authorized(req.get_header_value("Authorization"))) {
                throw Error(Errc::unauthorized, "operator token required");
            }
            svc.reload();
            const auto snap = svc.snapshot();
            send_json(res, 200, {{"kb_version", snap->kb->version},
                                 {"model_version", snap->backend->descriptor().model_version}});
        }));

        http.Get("/api/v1/health", guarded([this](const httplib::Request&, httplib::Response& res) {
            const auto snap = svc.snapshot();
            send_json(res, 200, {{"status", "ok"},
                                 {"kb_version", snap->kb->version},
                                 {"model_version", snap->backend->descriptor().model_version}});
        }));
    }
};

HttpServer::HttpServer(AdvisoryService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    const auto& cfg = impl_->svc.config();
    int port = cfg.port;
    if (port == 0) {
        port = impl_->http.bind_to_any_port(cfg.host);
        if (port < 0) throw Error(Errc::config, "cannot bind " + cfg.host);
    } else if (!impl_->http.bind_to_port(cfg.host, port)) {
        throw Error(Errc::config, "cannot bind " + cfg.host + ":" + std::to_string(port));
    }
    impl_->bound = true;
    return port;
}

void HttpServer::listen() {
    if (!impl_->bound) bind();
    impl_->http.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->bound) impl_->http.stop();
}

bool HttpServer::running() const { return impl_->http.is_running(); }

}  // namespace tomato::server
