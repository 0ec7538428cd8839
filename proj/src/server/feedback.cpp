#include "tomato/feedback.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include "tomato/error.hpp"
#include "tomato/inference.hpp"

namespace tomato::server {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'F', 'B', '1'};
constexpr std::size_t kHeader = 12;
constexpr std::uint32_t kMaxPayload = 16u << 20;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t checksum(const void* data, std::size_t n) {
    return static_cast<std::uint32_t>(crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

[[noreturn]] void storage_error(const std::string& what) {
    throw Error(Errc::storage, what + ": " + std::strerror(errno));
}

std::int64_t system_now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

BoundingBox box_from(const json& b, const std::string& field) {
    if (!b.is_object()) throw Error(Errc::validation, field + " must be an object");
    BoundingBox box;
    try {
        box = {b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("w").get<double>(),
               b.at("h").get<double>()};
    } catch (const json::exception&) {
        throw Error(Errc::validation, field + " needs numeric cx, cy, w and h");
    }
    if (!is_valid(box)) throw Error(Errc::validation, field + " is not a valid normalized box");
    return box;
}

json box_json(const BoundingBox& b) { return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}}; }

std::string optional_string(const json& j, const char* key, std::size_t max_bytes) {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    if (!j.at(key).is_string()) throw Error(Errc::validation, std::string(key) + " must be a string");
    auto s = j.at(key).get<std::string>();
    if (s.size() > max_bytes) throw Error(Errc::validation, std::string(key) + " is too long");
    return s;
}

}  // namespace

std::string format_timestamp(std::int64_t ms) {
    std::int64_t secs = ms / 1000;
    std::int64_t rem = ms % 1000;
    if (rem < 0) {
        rem += 1000;
        --secs;
    }
    const std::time_t t = static_cast<std::time_t>(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(rem));
    return buf;
}

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
    if (text.empty()) return std::nullopt;
    if (std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        if (text.size() > 18) return std::nullopt;
        return std::stoll(text);
    }
    std::tm tm{};
    int millis = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &consumed) != 3) {
        return std::nullopt;
    }
    std::size_t pos = static_cast<std::size_t>(consumed);
    if (pos < text.size()) {
        if (text[pos] != 'T') return std::nullopt;
        int n = 0;
        if (std::sscanf(text.c_str() + pos, "T%2d:%2d:%2d%n", &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &n) != 3) {
            return std::nullopt;
        }
        pos += static_cast<std::size_t>(n);
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            int digits = 0;
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                if (digits < 3) millis = millis * 10 + (text[pos] - '0');
                ++digits;
                ++pos;
            }
            if (digits == 0) return std::nullopt;
            for (; digits < 3; ++digits) millis *= 10;
        }
        if (text.substr(pos) != "Z") return std::nullopt;
    }
    if (tm.tm_mon < 1 || tm.tm_mon > 12 || tm.tm_mday < 1 || tm.tm_mday > 31 || tm.tm_hour > 23 ||
        tm.tm_min > 59 || tm.tm_sec > 60) {
        return std::nullopt;
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return static_cast<std::int64_t>(timegm(&tm)) * 1000 + millis;
}

FeedbackRecord feedback_from_submission(const json& j) {
    if (!j.is_object()) throw Error(Errc::validation, "feedback must be a JSON object");
    FeedbackRecord r;
    r.request_id = optional_string(j, "request_id", 128);
    r.image_hash = optional_string(j, "image_hash", 128);
    if (r.request_id.empty() && r.image_hash.empty()) {
        throw Error(Errc::validation, "feedback needs a request_id or an image_hash");
    }
    if (j.contains("original_detections")) {
        const auto& dets = j.at("original_detections");
        if (!dets.is_array()) throw Error(Errc::validation, "original_detections must be an array");
        for (std::size_t i = 0; i < dets.size(); ++i) {
            const std::string field = "original_detections[" + std::to_string(i) + "]";
            Detection d;
            try {
                d = infer::detection_from_json(dets[i]);
            } catch (const std::exception& e) {
                throw Error(Errc::validation, field + ": " + e.what());
            }
            d.box = box_from(dets[i].at("box"), field + ".box");
            if (!(d.score >= 0.0 && d.score <= 1.0)) throw Error(Errc::validation, field + ".score must be in [0, 1]");
            r.original.push_back(d);
        }
    }
    if (!j.contains("corrected_labels")) throw Error(Errc::validation, "corrected_labels is required");
    const auto& labels = j.at("corrected_labels");
    if (labels.is_string()) {
        if (labels.get<std::string>() != "no disease") {
            throw Error(Errc::validation, "corrected_labels must be a list or \"no disease\"");
        }
        r.no_disease = true;
    } else if (labels.is_array()) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const std::string field = "corrected_labels[" + std::to_string(i) + "]";
            const auto& l = labels[i];
            if (!l.is_object() || !l.contains("slug") || !l.at("slug").is_string()) {
                throw Error(Errc::validation, field + " needs a slug");
            }
            const auto slug = l.at("slug").get<std::string>();
            if (!find_label(slug)) throw Error(Errc::validation, field + ".slug: unknown slug '" + slug + "'");
            if (!l.contains("box")) throw Error(Errc::validation, field + " needs a box");
            r.corrected.push_back({slug, box_from(l.at("box"), field + ".box")});
        }
    } else {
        throw Error(Errc::validation, "corrected_labels must be a list or \"no disease\"");
    }
    r.comment = optional_string(j, "comment", kMaxCommentBytes);
    const auto locale = optional_string(j, "locale", 16);
    if (!locale.empty()) r.locale = locale;
    return r;
}

json to_json(const FeedbackRecord& r) {
    json original = json::array();
    for (const auto& d : r.original) original.push_back(infer::detection_to_json(d));
    json corrected;
    if (r.no_disease) {
        corrected = "no disease";
    } else {
        corrected = json::array();
        for (const auto& l : r.corrected) corrected.push_back({{"slug", l.slug}, {"box", box_json(l.box)}});
    }
    return {{"id", r.id},
            {"timestamp", format_timestamp(r.timestamp_ms)},
            {"timestamp_ms", r.timestamp_ms},
            {"request_id", r.request_id},
            {"image_hash", r.image_hash},
            {"original_detections", original},
            {"corrected_labels", corrected},
            {"comment", r.comment},
            {"locale", r.locale}};
}

FeedbackRecord feedback_from_json(const json& j) {
    auto r = feedback_from_submission(j);
    r.id = j.at("id").get<std::uint64_t>();
    r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    return r;
}

ScanResult scan_feedback_log(const std::filesystem::path& path) {
    ScanResult out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    out.file_bytes = data.size();
    std::size_t pos = 0;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    while (pos + kHeader <= data.size()) {
        if (std::memcmp(bytes + pos, kMagic, 4) != 0) break;
        const std::uint32_t len = get_u32(bytes + pos + 4);
        const std::uint32_t crc = get_u32(bytes + pos + 8);
        if (len > kMaxPayload || pos + kHeader + len > data.size()) break;
        if (checksum(bytes + pos + kHeader, len) != crc) break;
        try {
            out.records.push_back(feedback_from_json(json::parse(data.substr(pos + kHeader, len))));
        } catch (const std::exception&) {
            break;
        }
        pos += kHeader + len;
    }
    out.valid_bytes = pos;
    return out;
}

FeedbackLog::FeedbackLog(std::filesystem::path path, Clock clock)
    : path_(std::move(path)), clock_(clock ? std::move(clock) : Clock(system_now_ms)) {
    if (path_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path_.parent_path(), ec);
    }
    const bool existed = std::filesystem::exists(path_);
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) storage_error("cannot open feedback log '" + path_.string() + "'");
    if (!existed) {
        // Make the new directory entry itself durable.
        const auto dir = path_.has_parent_path() ? path_.parent_path() : std::filesystem::path(".");
        const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (dfd >= 0) {
            ::fsync(dfd);
            ::close(dfd);
        }
    }
    const auto scan = scan_feedback_log(path_);
    if (scan.valid_bytes < scan.file_bytes) {
        if (::ftruncate(fd_, static_cast<off_t>(scan.valid_bytes)) != 0 || ::fsync(fd_) != 0) {
            const int saved = errno;
            ::close(fd_);
            errno = saved;
            storage_error("cannot truncate torn feedback log tail");
        }
        truncated_ = scan.file_bytes - scan.valid_bytes;
    }
    if (::lseek(fd_, 0, SEEK_END) < 0) storage_error("cannot seek feedback log");
    count_ = scan.records.size();
    for (const auto& r : scan.records) {
        next_id_ = std::max(next_id_, r.id + 1);
        last_ts_ = std::max(last_ts_, r.timestamp_ms);
    }
}

FeedbackLog::~FeedbackLog() {
    if (fd_ >= 0) ::close(fd_);
}

FeedbackRecord FeedbackLog::append(FeedbackRecord record) {
    std::lock_guard lock(mu_);
    record.id = next_id_;
    record.timestamp_ms = std::max(clock_(), last_ts_);
    const std::string payload = to_json(record).dump();
    std::string frame(kMagic, 4);
    put_u32(frame, static_cast<std::uint32_t>(payload.size()));
    put_u32(frame, checksum(payload.data(), payload.size()));
    frame += payload;

    const off_t start = ::lseek(fd_, 0, SEEK_END);
    if (start < 0) storage_error("cannot seek feedback log");
    std::size_t written = 0;
    while (written < frame.size()) {
        const ssize_t n = ::write(fd_, frame.data() + written, frame.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int saved = errno;
            // Drop the partial frame so the next append starts clean.
            if (::ftruncate(fd_, start) != 0) {}
            errno = saved;
            storage_error("cannot append to feedback log");
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) storage_error("cannot sync feedback log");
    ++next_id_;
    last_ts_ = record.timestamp_ms;
    ++count_;
    return record;
}

std::vector<FeedbackRecord> FeedbackLog::read_since(std::int64_t since_ms) const {
    std::lock_guard lock(mu_);
    auto records = scan_feedback_log(path_).records;
    std::erase_if(records, [&](const FeedbackRecord& r) { return r.timestamp_ms < since_ms; });
    return records;
}

std::size_t FeedbackLog::size() const {
    std::lock_guard lock(mu_);
    return count_;
}

}  // namespace tomato::server
