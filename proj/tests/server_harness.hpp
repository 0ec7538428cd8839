#pragma once

#include <chrono>
#include <csignal>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "test_support.hpp"
#include "tomato/server.hpp"

namespace testing {

inline const std::filesystem::path kData = TOMATO_DATA_DIR;

inline tomato::server::ServerConfig stub_config(const std::filesystem::path& dir) {
    tomato::server::ServerConfig c;
    c.port = 0;
    c.kb_path = kData / "kb" / "seed_kb.json";
    c.backend = "stub:" + (kData / "stub" / "fixture.json").string();
    c.feedback_log = dir / "feedback.log";
    c.operator_token = "s3cret";
    c.threads = 8;
    return c;
}

// Service plus HTTP listener on an ephemeral loopback port.
class LiveServer {
public:
    explicit LiveServer(tomato::server::ServerConfig config)
        : service_(std::move(config)), http_(service_) {
        port_ = http_.bind();
        thread_ = std::thread([this] { http_.listen(); });
        for (int i = 0; i < 500 && !http_.running(); ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }
    ~LiveServer() {
        http_.stop();
        if (thread_.joinable()) thread_.join();
    }

    tomato::server::AdvisoryService& service() { return service_; }
    int port() const { return port_; }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        c.set_write_timeout(30, 0);
        return c;
    }

private:
    tomato::server::AdvisoryService service_;
    tomato::server::HttpServer http_;
    int port_ = 0;
    std::thread thread_;
};

// POST /api/v1/detect as multipart with the file in field "image".
inline httplib::Result post_image(httplib::Client& c, const std::string& bytes, const std::string& query = "") {
    httplib::MultipartFormDataItems items{{"image", bytes, "leaf.png", "image/png"}};
    return c.Post("/api/v1/detect" + query, items);
}

// Drops per-request fields so responses can be compared across runs.
inline nlohmann::json without_request_id(nlohmann::json j) {
    j.erase("request_id");
    return j;
}

// A user marking a nutrient-excess box as a false positive.
inline nlohmann::json false_positive_submission(const std::string& request_id, const std::string& comment = "") {
    return {{"request_id", request_id},
            {"original_detections",
             {{{"slug", "nutrex"}, {"score", 0.41}, {"box", {{"cx", 0.3}, {"cy", 0.6}, {"w", 0.2}, {"h", 0.25}}}}}},
            {"corrected_labels", "no disease"},
            {"comment", comment.empty() ? "nutrex box was false positive" : comment},
            {"locale", "ne"}};
}

struct CrashOutcome {
    std::vector<std::uint64_t> acked;  // ids whose append returned before the kill
    std::vector<tomato::server::FeedbackRecord> recovered;
    std::uintmax_t truncated_bytes = 0;
};

// Forks a writer that appends as fast as it can and reports each completed
// append over a pipe, SIGKILLs it after `acks` reports, then reopens the log.
inline CrashOutcome crash_append_and_kill(const std::filesystem::path& log_path, int acks) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
        ::close(fds[0]);
        try {
            tomato::server::FeedbackLog log(log_path);
            const auto record = tomato::server::feedback_from_submission(
                false_positive_submission("req-crash", std::string(3000, 'x')));
            for (;;) {
                const std::uint64_t id = log.append(record).id;
                if (::write(fds[1], &id, sizeof id) != sizeof id) break;
            }
        } catch (...) {
        }
        ::_exit(1);
    }
    ::close(fds[1]);
    CrashOutcome out;
    std::uint64_t id = 0;
    while (static_cast<int>(out.acked.size()) < acks && ::read(fds[0], &id, sizeof id) == sizeof id) {
        out.acked.push_back(id);
    }
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    while (::read(fds[0], &id, sizeof id) == sizeof id) out.acked.push_back(id);
    ::close(fds[0]);

    tomato::server::FeedbackLog reopened(log_path);
    out.recovered = reopened.read_since(0);
    out.truncated_bytes = reopened.truncated_bytes();
    return out;
}

}  // namespace testing
