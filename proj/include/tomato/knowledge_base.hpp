#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tomato/error.hpp"

namespace tomato::kb {

enum class Lang { ne, en };
std::optional<Lang> parse_lang(std::string_view code);
std::string_view lang_code(Lang lang);

// One disease record. The Nepali sections are authoritative; English
// sections are optional and may be absent individually.
struct DiseaseEntry {
    std::string slug;
    std::string name_ne;
    std::string name_en;
    std::vector<std::string> symptoms;
    std::vector<std::string> prevention;
    std::vector<std::string> remedy;
    std::optional<std::vector<std::string>> symptoms_en;
    std::optional<std::vector<std::string>> prevention_en;
    std::optional<std::vector<std::string>> remedy_en;
    bool draft = false;
    long last_modified_version = 1;

    bool operator==(const DiseaseEntry&) const = default;
};

struct KnowledgeBase {
    long version = 1;
    std::map<std::string, DiseaseEntry> entries;
    bool operator==(const KnowledgeBase&) const = default;
};

// Draft mode accepts entries flagged "draft"; strict mode reports them.
enum class ValidationMode { draft, strict };

struct Violation {
    std::string code;  // e.g. "missing-section", "duplicate-slug", "version-ordering"
    std::string path;  // e.g. "entries.gmold.remedy"
    std::string message;
};

// Empty iff parse_kb would succeed on the same document and mode.
std::vector<Violation> validate_kb(std::string_view document, ValidationMode mode = ValidationMode::draft);

class KbError : public Error {
public:
    KbError(Errc code, const std::string& message, std::vector<Violation> violations)
        : Error(code, message), violations_(std::move(violations)) {}
    const std::vector<Violation>& violations() const noexcept { return violations_; }

private:
    std::vector<Violation> violations_;
};

// Throws KbError: Errc::format for unparseable JSON, Errc::validation otherwise.
KnowledgeBase parse_kb(std::string_view document, ValidationMode mode = ValidationMode::draft);
KnowledgeBase load_kb(const std::filesystem::path& path, ValidationMode mode = ValidationMode::draft);

nlohmann::json entry_to_json(const DiseaseEntry& entry);
nlohmann::json kb_to_json(const KnowledgeBase& kb);
// Sorted keys, two-space indent, raw UTF-8, trailing newline.
std::string serialize_kb(const KnowledgeBase& kb);
// Write to a sibling temp file, fsync, then rename over the target.
void save_kb_atomic(const std::filesystem::path& path, const KnowledgeBase& kb);

struct RemedyDocument {
    std::string slug;
    Lang lang = Lang::ne;
    std::string name;
    std::string name_ne;
    std::string name_en;
    std::vector<std::string> symptoms;
    std::vector<std::string> prevention;
    std::vector<std::string> remedy;
    bool fallback = false;  // some requested-language field was absent
    bool draft = false;
    long kb_version = 0;
};

// Throws Error(no_remedy_defined) for the background class and
// Error(not_found) for slugs with no entry.
RemedyDocument lookup(const KnowledgeBase& kb, std::string_view slug, Lang lang);
nlohmann::json to_json(const RemedyDocument& doc);

struct KbDelta {
    long since = 0;
    long to = 0;
    std::map<std::string, DiseaseEntry> entries;
};

// Entries with last_modified_version > since; empty when since >= version.
KbDelta kb_delta(const KnowledgeBase& kb, long since);
nlohmann::json to_json(const KbDelta& delta);
KbDelta delta_from_json(const nlohmann::json& j);
// Client side: snapshot must be at version >= delta.since.
KnowledgeBase apply_delta(KnowledgeBase snapshot, const KbDelta& delta);

}  // namespace tomato::kb
