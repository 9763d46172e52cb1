#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "immunize/manifest.hpp"
#include "immunize/pipeline.hpp"

using namespace immunize;
using namespace immunize::testing;

namespace {

nlohmann::json entry_json(const std::string& id, const std::string& category,
                          int unseen_count = 5) {
    nlohmann::json entry;
    entry["id"] = id;
    entry["image"] = id + ".png";
    entry["category"] = category;
    entry["original_prompt"] = "make it night";
    nlohmann::json prompts = nlohmann::json::array();
    for (int i = 0; i < unseen_count; ++i) {
        prompts.push_back("unseen prompt " + std::to_string(i));
    }
    entry["unseen_prompts"] = std::move(prompts);
    return entry;
}

std::filesystem::path write_manifest(const TempDir& dir, const nlohmann::json& doc) {
    const auto path = dir.path() / "manifest.json";
    std::ofstream(path) << doc.dump(2);
    return path;
}

}  // namespace

TEST_CASE("a two-entry manifest loads with per-category counts") {
    TempDir dir("manifest");
    nlohmann::json doc;
    doc["entries"] = nlohmann::json::array({entry_json("a", "portrait"),
                                            entry_json("b", "landscape")});
    const DatasetManifest manifest = load_manifest(write_manifest(dir, doc));
    CHECK(manifest.entries.size() == 2);
    const auto counts = manifest.category_counts();
    CHECK(counts.at("portrait") == 1);
    CHECK(counts.at("landscape") == 1);
    CHECK(manifest.entries[0].image == dir.path() / "a.png");
}

TEST_CASE("an entry with four unseen prompts is named in the error") {
    TempDir dir("manifest");
    nlohmann::json doc;
    doc["entries"] = nlohmann::json::array({entry_json("ok", "portrait"),
                                            entry_json("bad", "artwork", 4)});
    try {
        load_manifest(write_manifest(dir, doc));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("bad") != std::string::npos);
        CHECK(what.find("unseen_prompts") != std::string::npos);
    }
}

TEST_CASE("schema violations name the entry and field") {
    TempDir dir("manifest");
    SUBCASE("unknown category") {
        nlohmann::json doc;
        doc["entries"] = nlohmann::json::array({entry_json("x", "selfie")});
        try {
            load_manifest(write_manifest(dir, doc));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("category") != std::string::npos);
            CHECK(std::string(e.what()).find("'x'") != std::string::npos);
        }
    }
    SUBCASE("duplicate ids") {
        nlohmann::json doc;
        doc["entries"] = nlohmann::json::array({entry_json("dup", "portrait"),
                                                entry_json("dup", "portrait")});
        CHECK_THROWS_AS(load_manifest(write_manifest(dir, doc)), ConfigError);
    }
    SUBCASE("missing field") {
        nlohmann::json entry = entry_json("x", "portrait");
        entry.erase("original_prompt");
        nlohmann::json doc;
        doc["entries"] = nlohmann::json::array({entry});
        try {
            load_manifest(write_manifest(dir, doc));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("original_prompt") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_manifest(dir.path() / "nope.json"), IoError);
    }
}

TEST_CASE("a paper-shaped 100-entry manifest plans 500 unseen-prompt edit jobs") {
    DatasetManifest manifest;
    const char* categories[] = {"portrait", "landscape", "artwork"};
    for (int i = 0; i < 100; ++i) {
        ManifestEntry entry;
        entry.id = "img" + std::to_string(i);
        entry.image = entry.id + ".png";
        entry.category = categories[i < 35 ? 0 : (i < 70 ? 1 : 2)];
        entry.original_prompt = "original";
        entry.unseen_prompts = {"u1", "u2", "u3", "u4", "u5"};
        manifest.entries.push_back(std::move(entry));
    }
    validate_manifest(manifest);
    CHECK(plan_edit_jobs(manifest, PromptMode::Unseen).size() == 500);
    CHECK(plan_edit_jobs(manifest, PromptMode::Original).size() == 100);
    CHECK(plan_edit_jobs(manifest, PromptMode::Both).size() == 600);
}

TEST_CASE("job arity per entry follows the prompt mode") {
    DatasetManifest manifest;
    ManifestEntry entry;
    entry.id = "one";
    entry.image = "one.png";
    entry.category = "portrait";
    entry.original_prompt = "original";
    entry.unseen_prompts = {"u1", "u2", "u3", "u4", "u5"};
    manifest.entries.push_back(entry);

    const auto both = plan_edit_jobs(manifest, PromptMode::Both);
    CHECK(both.size() == 6);  // 1 original + 5 unseen
    CHECK(both[0].prompt_mode == "original");
    CHECK(both[0].prompt_index == 0);
    CHECK(both[5].prompt_mode == "unseen");
    CHECK(both[5].prompt_index == 5);
}
