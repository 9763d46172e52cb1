#include "immunize/manifest.hpp"

#include <set>

#include <json.hpp>

#include "immunize/errors.hpp"
#include "immunize/util.hpp"

namespace immunize {

namespace {

const std::set<std::string>& allowed_categories() {
    static const std::set<std::string> categories = {"portrait", "landscape", "artwork"};
    return categories;
}

std::string entry_label(const nlohmann::json& entry, std::size_t index) {
    if (entry.is_object() && entry.contains("id") && entry["id"].is_string()) {
        return "entry '" + entry["id"].get<std::string>() + "'";
    }
    return "entry #" + std::to_string(index);
}

}  // namespace

std::map<std::string, int> DatasetManifest::category_counts() const {
    std::map<std::string, int> counts;
    for (const ManifestEntry& e : entries) ++counts[e.category];
    return counts;
}

void validate_manifest(const DatasetManifest& manifest) {
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const ManifestEntry& e = manifest.entries[i];
        const std::string label = "entry '" + (e.id.empty() ? "#" + std::to_string(i) : e.id) + "'";
        if (e.id.empty()) throw ConfigError("manifest: " + label + ": field 'id' must be non-empty");
        if (!seen_ids.insert(e.id).second) {
            throw ConfigError("manifest: " + label + ": field 'id' duplicates another entry");
        }
        if (e.image.empty()) {
            throw ConfigError("manifest: " + label + ": field 'image' must be non-empty");
        }
        if (!allowed_categories().count(e.category)) {
            throw ConfigError("manifest: " + label +
                              ": field 'category' must be portrait, landscape or artwork");
        }
        if (e.original_prompt.empty()) {
            throw ConfigError("manifest: " + label + ": field 'original_prompt' must be non-empty");
        }
        if (e.unseen_prompts.size() != 5) {
            throw ConfigError("manifest: " + label + ": field 'unseen_prompts' must contain " +
                              "exactly 5 prompts, got " + std::to_string(e.unseen_prompts.size()));
        }
        for (const std::string& p : e.unseen_prompts) {
            if (p.empty()) {
                throw ConfigError("manifest: " + label +
                                  ": field 'unseen_prompts' contains an empty prompt");
            }
        }
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw IoError("manifest file not found: " + path.string());
    }
    nlohmann::json doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("entries") ||
        !doc["entries"].is_array()) {
        throw ConfigError("manifest: " + path.string() +
                          ": expected a JSON object with an 'entries' array");
    }

    DatasetManifest manifest;
    const auto base_dir = path.parent_path();
    std::size_t index = 0;
    for (const auto& raw : doc["entries"]) {
        const std::string label = entry_label(raw, index);
        auto require_string = [&raw, &label](const char* field) {
            if (!raw.contains(field) || !raw[field].is_string()) {
                throw ConfigError("manifest: " + label + ": field '" + field +
                                  "' must be a string");
            }
            return raw[field].get<std::string>();
        };
        ManifestEntry entry;
        entry.id = require_string("id");
        std::filesystem::path image = require_string("image");
        entry.image = image.is_absolute() ? image : base_dir / image;
        entry.category = require_string("category");
        entry.original_prompt = require_string("original_prompt");
        if (!raw.contains("unseen_prompts") || !raw["unseen_prompts"].is_array()) {
            throw ConfigError("manifest: " + label + ": field 'unseen_prompts' must be an array");
        }
        for (const auto& p : raw["unseen_prompts"]) {
            if (!p.is_string()) {
                throw ConfigError("manifest: " + label +
                                  ": field 'unseen_prompts' must contain strings");
            }
            entry.unseen_prompts.push_back(p.get<std::string>());
        }
        manifest.entries.push_back(std::move(entry));
        ++index;
    }
    validate_manifest(manifest);
    return manifest;
}

}  // namespace immunize
