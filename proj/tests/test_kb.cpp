#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "tomato/knowledge_base.hpp"
#include "tomato/labels.hpp"

using namespace tomato;
using namespace tomato::kb;
using nlohmann::json;

namespace {

const std::string kSeedPath = std::string(TOMATO_DATA_DIR) + "/kb/seed_kb.json";

std::string seed_text() { return testing::read_file(kSeedPath); }

bool has_violation(const std::vector<Violation>& vs, const std::string& code, const std::string& path) {
    for (const auto& v : vs) {
        if (v.code == code && v.path == path) return true;
    }
    return false;
}

// Applies one random edit: bump the KB version and rewrite one entry.
void random_edit(KnowledgeBase& kb, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> which(0, kb.entries.size() - 1);
    auto it = kb.entries.begin();
    std::advance(it, static_cast<long>(which(rng)));
    ++kb.version;
    auto& e = it->second;
    e.last_modified_version = kb.version;
    e.remedy.push_back("संशोधन " + std::to_string(kb.version));
    if (rng() % 3 == 0) e.symptoms_en = std::vector<std::string>{"revision " + std::to_string(kb.version)};
    if (rng() % 4 == 0) e.draft = !e.draft;
}

}  // namespace

TEST_CASE("seed KB loads with nine entries at version 1") {
    const auto kb = load_kb(kSeedPath);
    CHECK(kb.version == 1);
    CHECK(kb.entries.size() == 9);
    CHECK_FALSE(kb.entries.count("back"));
    const auto& pm = kb.entries.at("pmildew");
    REQUIRE_FALSE(pm.symptoms.empty());
    CHECK(pm.symptoms[0].rfind("सुरूमा पातको माथिल्लो सतहमा", 0) == 0);
    CHECK(pm.name_ne == "सेतो दुसी रोग वा खरानी रोग");
    CHECK_FALSE(pm.draft);
    CHECK(kb.entries.at("gmold").draft);
    CHECK(validate_kb(seed_text()).empty());
}

TEST_CASE("seed KB round-trips byte-identically") {
    const auto text = seed_text();
    const auto kb = parse_kb(text);
    CHECK(serialize_kb(kb) == text);
    CHECK(parse_kb(serialize_kb(kb)) == kb);
}

TEST_CASE("strict mode rejects draft entries") {
    const auto vs = validate_kb(seed_text(), ValidationMode::strict);
    CHECK(vs.size() == 8);
    CHECK(has_violation(vs, "draft-entry", "entries.gmold"));
    CHECK_FALSE(has_violation(vs, "draft-entry", "entries.pmildew"));
    CHECK_THROWS_AS(parse_kb(seed_text(), ValidationMode::strict), KbError);
}

TEST_CASE("duplicate slug is reported") {
    auto text = seed_text();
    const std::string dup = R"("gmold": {"last_modified_version": 1, "name_ne": "x", "prevention": ["a"], "remedy": ["a"], "symptoms": ["a"]},)";
    text.insert(text.find("\"canker\""), dup + "\n    ");
    const auto vs = validate_kb(text);
    CHECK(has_violation(vs, "duplicate-slug", "entries.gmold"));
    try {
        parse_kb(text);
        FAIL("expected a validation error");
    } catch (const KbError& e) {
        CHECK(e.code() == Errc::validation);
        CHECK(has_violation(e.violations(), "duplicate-slug", "entries.gmold"));
    }
}

TEST_CASE("validation violations carry codes and paths") {
    auto doc = json::parse(seed_text());
    doc["entries"]["gmold"].erase("remedy");
    CHECK(has_violation(validate_kb(doc.dump()), "missing-section", "entries.gmold.remedy"));

    doc = json::parse(seed_text());
    doc["entries"]["canker"]["last_modified_version"] = 2;
    CHECK(has_violation(validate_kb(doc.dump()), "version-ordering", "entries.canker.last_modified_version"));

    doc = json::parse(seed_text());
    doc["entries"]["xyz"] = doc["entries"]["gmold"];
    CHECK(has_violation(validate_kb(doc.dump()), "unknown-slug", "entries.xyz"));

    doc = json::parse(seed_text());
    doc["entries"]["back"] = doc["entries"]["gmold"];
    CHECK(has_violation(validate_kb(doc.dump()), "background-entry", "entries.back"));

    doc = json::parse(seed_text());
    doc["entries"].erase("lmold");
    CHECK(has_violation(validate_kb(doc.dump()), "missing-entry", "entries.lmold"));

    doc = json::parse(seed_text());
    doc["entries"]["lmold"]["symptoms"] = json::array();
    CHECK(has_violation(validate_kb(doc.dump()), "empty-section", "entries.lmold.symptoms"));

    doc = json::parse(seed_text());
    doc["entries"]["lmold"]["colour"] = "red";
    CHECK(has_violation(validate_kb(doc.dump()), "unknown-field", "entries.lmold.colour"));

    doc = json::parse(seed_text());
    doc.erase("version");
    CHECK(has_violation(validate_kb(doc.dump()), "missing-field", "version"));
}

TEST_CASE("parse errors report a line") {
    const std::string bad = "{\n  \"version\": 1,\n  \"entries\": {,\n}\n";
    const auto vs = validate_kb(bad);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].code == "parse-error");
    CHECK(vs[0].path.rfind("line 3", 0) == 0);
    try {
        parse_kb(bad);
        FAIL("expected a format error");
    } catch (const KbError& e) {
        CHECK(e.code() == Errc::format);
    }
    CHECK_THROWS_AS(load_kb("/nonexistent/kb.json"), KbError);
}

TEST_CASE("validate_kb is empty iff parse_kb succeeds") {
    std::mt19937_64 rng(5);
    const auto base = json::parse(seed_text());
    const std::vector<std::string> fields{"name_ne", "symptoms", "remedy", "last_modified_version", "draft"};
    for (int trial = 0; trial < 60; ++trial) {
        auto doc = base;
        auto& e = doc["entries"][std::string(label_for_id(1 + static_cast<int>(rng() % 9)).slug)];
        const auto& f = fields[rng() % fields.size()];
        switch (rng() % 3) {
            case 0: e.erase(f); break;
            case 1: e[f] = 42; break;
            default: e[f] = json::array({"ok"}); break;
        }
        const auto text = doc.dump();
        for (auto mode : {ValidationMode::draft, ValidationMode::strict}) {
            const bool clean = validate_kb(text, mode).empty();
            bool parsed = true;
            try {
                parse_kb(text, mode);
            } catch (const KbError&) {
                parsed = false;
            }
            CHECK(clean == parsed);
        }
    }
}

TEST_CASE("lookup returns localized documents") {
    const auto kb = load_kb(kSeedPath);
    const auto pm = lookup(kb, "pmildew", Lang::ne);
    CHECK(pm.slug == "pmildew");
    CHECK_FALSE(pm.fallback);
    bool soda = false;
    for (const auto& p : pm.remedy) soda = soda || p.find("खाने सोडा (Baking soda) १० ग्राम प्रति लिटर") != std::string::npos;
    CHECK(soda);
    CHECK(pm.kb_version == 1);

    const auto gm = lookup(kb, "gmold", Lang::en);
    CHECK(gm.fallback);
    CHECK(gm.name == "Gray mold");
    CHECK(gm.symptoms == kb.entries.at("gmold").symptoms);

    try {
        lookup(kb, "back", Lang::ne);
        FAIL("expected no-remedy-defined");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::no_remedy_defined);
    }
    try {
        lookup(kb, "nosuch", Lang::ne);
        FAIL("expected not-found");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::not_found);
    }

    auto with_en = kb;
    with_en.entries.at("canker").symptoms_en = std::vector<std::string>{"Brown lesions."};
    const auto ck = lookup(with_en, "canker", Lang::en);
    CHECK(ck.symptoms == std::vector<std::string>{"Brown lesions."});
    CHECK(ck.fallback);  // prevention and remedy still absent in English

    const auto j = to_json(pm);
    CHECK(j["headings"]["remedy"] == "उपचार");
    CHECK(j["sections"]["symptoms"].size() == pm.symptoms.size());
}

TEST_CASE("lookup never returns another slug's content") {
    auto kb = load_kb(kSeedPath);
    for (auto& [slug, e] : kb.entries) e.remedy = {"remedy for " + slug};
    for (const auto& [slug, e] : kb.entries) {
        for (auto lang : {Lang::ne, Lang::en}) {
            const auto doc = lookup(kb, slug, lang);
            CHECK(doc.slug == slug);
            CHECK(doc.remedy == std::vector<std::string>{"remedy for " + slug});
        }
    }
}

TEST_CASE("kb_delta examples") {
    auto kb = load_kb(kSeedPath);
    const auto current = kb_delta(kb, kb.version);
    CHECK(current.entries.empty());
    CHECK(current.to == 1);
    CHECK(kb_delta(kb, 0).entries.size() == 9);
    CHECK_THROWS_AS(kb_delta(kb, -1), Error);

    // Version 5 with entries modified at 1, 4 and 5.
    kb.version = 5;
    kb.entries.at("canker").last_modified_version = 4;
    kb.entries.at("lmold").last_modified_version = 5;
    const auto d = kb_delta(kb, 3);
    CHECK(d.entries.size() == 2);
    CHECK(d.entries.count("canker") == 1);
    CHECK(d.entries.count("lmold") == 1);
    const auto j = to_json(d);
    CHECK(j["since"] == 3);
    CHECK(j["to"] == 5);
    CHECK(j["version"] == 5);
}

TEST_CASE("delta wire format round-trips") {
    auto kb = load_kb(kSeedPath);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 5; ++i) random_edit(kb, rng);
    const auto d = kb_delta(kb, 2);
    const auto back = delta_from_json(json::parse(to_json(d).dump()));
    CHECK(back.since == d.since);
    CHECK(back.to == d.to);
    CHECK(back.entries == d.entries);
    CHECK_THROWS_AS(delta_from_json(json{{"since", 0}}), Error);
}

TEST_CASE("delta sync reconstructs the server KB over random edit histories") {
    std::mt19937_64 rng(11);
    for (int history = 0; history < 100; ++history) {
        auto server = load_kb(kSeedPath);
        std::vector<KnowledgeBase> snapshots{server};
        const int edits = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < edits; ++i) {
            random_edit(server, rng);
            snapshots.push_back(server);
        }
        const auto& client = snapshots[rng() % snapshots.size()];
        const auto delta = delta_from_json(json::parse(to_json(kb_delta(server, client.version)).dump()));
        CHECK(apply_delta(client, delta) == server);
    }
}

TEST_CASE("apply_delta refuses gaps") {
    auto kb = load_kb(kSeedPath);
    KbDelta d;
    d.since = 3;
    d.to = 4;
    CHECK_THROWS_AS(apply_delta(kb, d), Error);
}

TEST_CASE("save_kb_atomic writes the canonical form") {
    testing::TempDir tmp;
    const auto kb = load_kb(kSeedPath);
    save_kb_atomic(tmp / "kb.json", kb);
    CHECK(testing::read_file(tmp / "kb.json") == seed_text());
    CHECK_FALSE(std::filesystem::exists(tmp / "kb.json.tmp"));
}
