#include "tomato/knowledge_base.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "tomato/labels.hpp"

namespace tomato::kb {

using nlohmann::json;

std::optional<Lang> parse_lang(std::string_view code) {
    if (code == "ne") return Lang::ne;
    if (code == "en") return Lang::en;
    return std::nullopt;
}

std::string_view lang_code(Lang lang) { return lang == Lang::ne ? "ne" : "en"; }

namespace {

constexpr const char* kSections[] = {"symptoms", "prevention", "remedy"};
const std::set<std::string> kKnownFields{
    "name_ne", "name_en", "symptoms", "prevention", "remedy", "symptoms_en",
    "prevention_en", "remedy_en", "draft", "last_modified_version"};

struct ParsedDocument {
    std::optional<json> doc;
    std::vector<Violation> violations;
};

ParsedDocument parse_document(std::string_view text) {
    struct Frame {
        bool is_object;
        std::set<std::string> keys;
        std::string key;
    };
    std::vector<Frame> frames;
    ParsedDocument out;

    const auto path_with = [&](const std::string& last) {
        std::string p;
        for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
            if (frames[i].key.empty()) continue;
            if (!p.empty()) p += '.';
            p += frames[i].key;
        }
        if (!p.empty()) p += '.';
        return p + last;
    };

    json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start: frames.push_back({true, {}, {}}); break;
            case json::parse_event_t::array_start: frames.push_back({false, {}, {}}); break;
            case json::parse_event_t::object_end:
            case json::parse_event_t::array_end:
                if (!frames.empty()) frames.pop_back();
                break;
            case json::parse_event_t::key: {
                auto& top = frames.back();
                top.key = parsed.get<std::string>();
                if (!top.keys.insert(top.key).second) {
                    const bool is_slug = frames.size() == 2 && frames[0].key == "entries";
                    out.violations.push_back({is_slug ? "duplicate-slug" : "duplicate-key", path_with(top.key),
                                              "key '" + top.key + "' appears more than once"});
                }
                break;
            }
            case json::parse_event_t::value: break;
        }
        return true;
    };

    try {
        out.doc = json::parse(text.begin(), text.end(), cb);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        out.doc.reset();
        out.violations.push_back({"parse-error", "line " + std::to_string(line) + ", column " + std::to_string(col),
                                  e.what()});
    }
    return out;
}

bool is_string_list(const json& j) {
    if (!j.is_array()) return false;
    for (const auto& v : j) {
        if (!v.is_string()) return false;
    }
    return true;
}

void validate_entry(const std::string& slug, const json& e, long kb_version, ValidationMode mode,
                    std::vector<Violation>& out) {
    const std::string base = "entries." + slug;
    if (!e.is_object()) {
        out.push_back({"invalid-type", base, "entry must be an object"});
        return;
    }
    for (const auto& [key, _] : e.items()) {
        if (!kKnownFields.count(key)) out.push_back({"unknown-field", base + "." + key, "unrecognized field"});
    }
    if (!e.contains("name_ne")) {
        out.push_back({"missing-field", base + ".name_ne", "Nepali name is required"});
    } else if (!e["name_ne"].is_string() || e["name_ne"].get<std::string>().empty()) {
        out.push_back({"invalid-type", base + ".name_ne", "must be a nonempty string"});
    }
    if (e.contains("name_en") && !e["name_en"].is_string()) {
        out.push_back({"invalid-type", base + ".name_en", "must be a string"});
    }
    for (const char* section : kSections) {
        const std::string path = base + "." + section;
        if (!e.contains(section)) {
            out.push_back({"missing-section", path, std::string(section) + " section is required"});
        } else if (!is_string_list(e[section])) {
            out.push_back({"invalid-type", path, "must be a list of paragraphs"});
        } else if (e[section].empty()) {
            out.push_back({"empty-section", path, "section has no paragraphs"});
        }
        const std::string en = std::string(section) + "_en";
        if (e.contains(en) && !is_string_list(e[en])) {
            out.push_back({"invalid-type", base + "." + en, "must be a list of paragraphs"});
        }
    }
    if (e.contains("draft")) {
        if (!e["draft"].is_boolean()) {
            out.push_back({"invalid-type", base + ".draft", "must be a boolean"});
        } else if (mode == ValidationMode::strict && e["draft"].get<bool>()) {
            out.push_back({"draft-entry", base, "entry is a draft (not accepted in strict mode)"});
        }
    }
    if (!e.contains("last_modified_version")) {
        out.push_back({"missing-field", base + ".last_modified_version", "required"});
    } else if (!e["last_modified_version"].is_number_integer()) {
        out.push_back({"invalid-type", base + ".last_modified_version", "must be an integer"});
    } else {
        const auto v = e["last_modified_version"].get<long>();
        if (v < 1) {
            out.push_back({"invalid-value", base + ".last_modified_version", "must be >= 1"});
        } else if (kb_version > 0 && v > kb_version) {
            out.push_back({"version-ordering", base + ".last_modified_version",
                           "entry version " + std::to_string(v) + " is newer than KB version " +
                               std::to_string(kb_version)});
        }
    }
}

void validate_document(const json& doc, ValidationMode mode, std::vector<Violation>& out) {
    if (!doc.is_object()) {
        out.push_back({"invalid-type", "", "document must be an object"});
        return;
    }
    for (const auto& [key, _] : doc.items()) {
        if (key != "version" && key != "entries") out.push_back({"unknown-field", key, "unrecognized field"});
    }
    long version = 0;
    if (!doc.contains("version")) {
        out.push_back({"missing-field", "version", "KB version is required"});
    } else if (!doc["version"].is_number_integer() || doc["version"].get<long>() < 1) {
        out.push_back({"invalid-value", "version", "must be an integer >= 1"});
    } else {
        version = doc["version"].get<long>();
    }
    if (!doc.contains("entries")) {
        out.push_back({"missing-field", "entries", "entries object is required"});
        return;
    }
    if (!doc["entries"].is_object()) {
        out.push_back({"invalid-type", "entries", "must be an object keyed by slug"});
        return;
    }
    for (const auto& [slug, entry] : doc["entries"].items()) {
        if (slug == kBackgroundSlug) {
            out.push_back({"background-entry", "entries." + slug, "the background class has no remedy entry"});
            continue;
        }
        if (!find_label(slug)) {
            out.push_back({"unknown-slug", "entries." + slug, "no class with slug '" + slug + "'"});
            continue;
        }
        validate_entry(slug, entry, version, mode, out);
    }
    for (const auto& label : class_labels()) {
        if (label.slug == kBackgroundSlug) continue;
        const std::string slug(label.slug);
        if (!doc["entries"].contains(slug)) {
            out.push_back({"missing-entry", "entries." + slug, "every disease class needs an entry"});
        }
    }
}

std::vector<std::string> string_list(const json& j) { return j.get<std::vector<std::string>>(); }

KnowledgeBase build(const json& doc) {
    KnowledgeBase kb;
    kb.version = doc["version"].get<long>();
    for (const auto& [slug, e] : doc["entries"].items()) {
        DiseaseEntry entry;
        entry.slug = slug;
        entry.name_ne = e["name_ne"].get<std::string>();
        entry.name_en = e.value("name_en", std::string{});
        entry.symptoms = string_list(e["symptoms"]);
        entry.prevention = string_list(e["prevention"]);
        entry.remedy = string_list(e["remedy"]);
        if (e.contains("symptoms_en")) entry.symptoms_en = string_list(e["symptoms_en"]);
        if (e.contains("prevention_en")) entry.prevention_en = string_list(e["prevention_en"]);
        if (e.contains("remedy_en")) entry.remedy_en = string_list(e["remedy_en"]);
        entry.draft = e.value("draft", false);
        entry.last_modified_version = e["last_modified_version"].get<long>();
        kb.entries.emplace(slug, std::move(entry));
    }
    return kb;
}

std::string summarize(const std::vector<Violation>& violations) {
    std::string msg = std::to_string(violations.size()) + " violation(s):";
    for (const auto& v : violations) msg += " [" + v.code + " at " + v.path + "]";
    return msg;
}

}  // namespace

std::vector<Violation> validate_kb(std::string_view document, ValidationMode mode) {
    auto parsed = parse_document(document);
    if (parsed.doc) validate_document(*parsed.doc, mode, parsed.violations);
    return parsed.violations;
}

KnowledgeBase parse_kb(std::string_view document, ValidationMode mode) {
    auto parsed = parse_document(document);
    if (!parsed.doc) {
        throw KbError(Errc::format, "KB parse error at " + parsed.violations.front().path + ": " +
                                        parsed.violations.front().message,
                      parsed.violations);
    }
    validate_document(*parsed.doc, mode, parsed.violations);
    if (!parsed.violations.empty()) {
        throw KbError(Errc::validation, "KB validation failed, " + summarize(parsed.violations), parsed.violations);
    }
    return build(*parsed.doc);
}

KnowledgeBase load_kb(const std::filesystem::path& path, ValidationMode mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw KbError(Errc::format, "cannot open KB file " + path.string(), {});
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_kb(ss.str(), mode);
}

json entry_to_json(const DiseaseEntry& entry) {
    json j = {{"name_ne", entry.name_ne},
              {"name_en", entry.name_en},
              {"symptoms", entry.symptoms},
              {"prevention", entry.prevention},
              {"remedy", entry.remedy},
              {"last_modified_version", entry.last_modified_version}};
    if (entry.symptoms_en) j["symptoms_en"] = *entry.symptoms_en;
    if (entry.prevention_en) j["prevention_en"] = *entry.prevention_en;
    if (entry.remedy_en) j["remedy_en"] = *entry.remedy_en;
    if (entry.draft) j["draft"] = true;
    return j;
}

json kb_to_json(const KnowledgeBase& kb) {
    json entries = json::object();
    for (const auto& [slug, e] : kb.entries) entries[slug] = entry_to_json(e);
    return {{"version", kb.version}, {"entries", entries}};
}

std::string serialize_kb(const KnowledgeBase& kb) { return kb_to_json(kb).dump(2) + "\n"; }

void save_kb_atomic(const std::filesystem::path& path, const KnowledgeBase& kb) {
    const auto text = serialize_kb(kb);
    const auto tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw Error(Errc::storage, "cannot create " + tmp);
    std::size_t written = 0;
    while (written < text.size()) {
        const auto n = ::write(fd, text.data() + written, text.size() - written);
        if (n <= 0) {
            ::close(fd);
            throw Error(Errc::storage, "write failed for " + tmp);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        ::close(fd);
        throw Error(Errc::storage, "fsync failed for " + tmp);
    }
    ::close(fd);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::storage, "rename failed: " + ec.message());
}

RemedyDocument lookup(const KnowledgeBase& kb, std::string_view slug, Lang lang) {
    if (slug == kBackgroundSlug) {
        throw Error(Errc::no_remedy_defined, "no remedy is defined for the background class");
    }
    const auto it = kb.entries.find(std::string(slug));
    if (it == kb.entries.end()) throw Error(Errc::not_found, "no KB entry for '" + std::string(slug) + "'");
    const auto& e = it->second;

    RemedyDocument doc;
    doc.slug = e.slug;
    doc.lang = lang;
    doc.name_ne = e.name_ne;
    doc.name_en = e.name_en;
    doc.draft = e.draft;
    doc.kb_version = kb.version;
    if (lang == Lang::ne) {
        doc.name = e.name_ne;
        doc.symptoms = e.symptoms;
        doc.prevention = e.prevention;
        doc.remedy = e.remedy;
        return doc;
    }
    const auto pick = [&](const std::optional<std::vector<std::string>>& en, const std::vector<std::string>& ne) {
        if (en && !en->empty()) return *en;
        doc.fallback = true;
        return ne;
    };
    if (!e.name_en.empty()) {
        doc.name = e.name_en;
    } else {
        doc.name = e.name_ne;
        doc.fallback = true;
    }
    doc.symptoms = pick(e.symptoms_en, e.symptoms);
    doc.prevention = pick(e.prevention_en, e.prevention);
    doc.remedy = pick(e.remedy_en, e.remedy);
    return doc;
}

json to_json(const RemedyDocument& doc) {
    const bool ne = doc.lang == Lang::ne;
    return {{"slug", doc.slug},
            {"lang", lang_code(doc.lang)},
            {"name", doc.name},
            {"name_ne", doc.name_ne},
            {"name_en", doc.name_en},
            {"headings",
             {{"symptoms", ne ? "लक्षणहरू" : "Symptoms"},
              {"prevention", ne ? "रोकथाम" : "Prevention"},
              {"remedy", ne ? "उपचार" : "Remedy"}}},
            {"sections", {{"symptoms", doc.symptoms}, {"prevention", doc.prevention}, {"remedy", doc.remedy}}},
            {"fallback", doc.fallback},
            {"draft", doc.draft},
            {"kb_version", doc.kb_version}};
}

KbDelta kb_delta(const KnowledgeBase& kb, long since) {
    if (since < 0) throw Error(Errc::contract, "delta 'since' must be >= 0");
    KbDelta delta;
    delta.since = since;
    delta.to = kb.version;
    if (since >= kb.version) return delta;
    for (const auto& [slug, e] : kb.entries) {
        if (e.last_modified_version > since) delta.entries.emplace(slug, e);
    }
    return delta;
}

json to_json(const KbDelta& delta) {
    json entries = json::object();
    for (const auto& [slug, e] : delta.entries) entries[slug] = entry_to_json(e);
    return {{"since", delta.since}, {"to", delta.to}, {"version", delta.to}, {"entries", entries}};
}

KbDelta delta_from_json(const json& j) {
    try {
        KbDelta delta;
        delta.since = j.at("since").get<long>();
        delta.to = j.at("to").get<long>();
        // Reuse the document validator on a KB-shaped wrapper of the entries.
        for (const auto& [slug, e] : j.at("entries").items()) {
            std::vector<Violation> v;
            if (!find_label(slug) || slug == kBackgroundSlug) {
                throw Error(Errc::format, "delta names unknown slug '" + slug + "'");
            }
            validate_entry(slug, e, delta.to, ValidationMode::draft, v);
            if (!v.empty()) throw Error(Errc::format, "invalid delta entry: " + summarize(v));
        }
        json wrapper = {{"version", delta.to}, {"entries", j.at("entries")}};
        delta.entries = build(wrapper).entries;
        return delta;
    } catch (const json::exception& e) {
        throw Error(Errc::format, std::string("malformed delta document: ") + e.what());
    }
}

KnowledgeBase apply_delta(KnowledgeBase snapshot, const KbDelta& delta) {
    if (delta.since > snapshot.version) {
        throw Error(Errc::contract, "delta starts at version " + std::to_string(delta.since) +
                                        " but the snapshot is at " + std::to_string(snapshot.version));
    }
    if (delta.to < snapshot.version) throw Error(Errc::contract, "delta is older than the snapshot");
    for (const auto& [slug, e] : delta.entries) snapshot.entries[slug] = e;
    snapshot.version = delta.to;
    return snapshot;
}

}  // namespace tomato::kb
