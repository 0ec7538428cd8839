#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomato/detection.hpp"

namespace tomato::server {

struct CorrectedLabel {
    std::string slug;
    BoundingBox box;
    bool operator==(const CorrectedLabel&) const = default;
};

struct FeedbackRecord {
    std::uint64_t id = 0;
    std::int64_t timestamp_ms = 0;  // UTC, milliseconds since the epoch
    std::string request_id;
    std::string image_hash;
    std::vector<Detection> original;
    bool no_disease = false;  // when set, corrected is empty
    std::vector<CorrectedLabel> corrected;
    std::string comment;
    std::string locale = "ne";

    bool operator==(const FeedbackRecord&) const = default;
};

inline constexpr std::size_t kMaxCommentBytes = 4096;

// Validates a client submission. id and timestamp are ignored and left zero.
// Throws Error(validation) naming the offending field.
FeedbackRecord feedback_from_submission(const nlohmann::json& j);

nlohmann::json to_json(const FeedbackRecord& r);
FeedbackRecord feedback_from_json(const nlohmann::json& j);

// "2026-10-14T02:38:00.123Z". parse_timestamp also accepts whole seconds,
// a bare date and an integer of epoch milliseconds.
std::string format_timestamp(std::int64_t ms);
std::optional<std::int64_t> parse_timestamp(const std::string& text);

// Append-only record log. Each frame is
//   "TFB1" | u32 payload length | u32 crc32(payload) | payload (UTF-8 JSON)
// with little-endian integers. Appends are fsynced before returning. On open
// the log is scanned and anything after the last intact frame is truncated,
// which discards a record torn by a crash mid-append.
class FeedbackLog {
public:
    using Clock = std::function<std::int64_t()>;

    explicit FeedbackLog(std::filesystem::path path, Clock clock = {});
    ~FeedbackLog();
    FeedbackLog(const FeedbackLog&) = delete;
    FeedbackLog& operator=(const FeedbackLog&) = delete;

    // Assigns id and timestamp and persists the record. Throws Error(storage).
    FeedbackRecord append(FeedbackRecord record);

    // Records with timestamp >= since_ms, in insertion order.
    std::vector<FeedbackRecord> read_since(std::int64_t since_ms) const;

    std::size_t size() const;
    std::uintmax_t truncated_bytes() const { return truncated_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    Clock clock_;
    int fd_ = -1;
    mutable std::mutex mu_;
    std::uint64_t next_id_ = 1;
    std::int64_t last_ts_ = 0;
    std::size_t count_ = 0;
    std::uintmax_t truncated_ = 0;
};

struct ScanResult {
    std::vector<FeedbackRecord> records;
    std::uintmax_t valid_bytes = 0;
    std::uintmax_t file_bytes = 0;
};

// Reads every intact frame from the start of the file. Stops at the first
// frame that is short, has a bad magic, a bad checksum or unparsable JSON.
ScanResult scan_feedback_log(const std::filesystem::path& path);

}  // namespace tomato::server
