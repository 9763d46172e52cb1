#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace immunize {

/// One dataset entry: an image, its category, the prompt used for
/// perturbation generation, and exactly five unseen prompts for
/// cross-prompt generalization.
struct ManifestEntry {
    std::string id;
    std::filesystem::path image;
    std::string category;  // portrait | landscape | artwork
    std::string original_prompt;
    std::vector<std::string> unseen_prompts;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::map<std::string, int> category_counts() const;
};

/// Parses and validates a manifest JSON file of the form
/// {"entries": [{"id", "image", "category", "original_prompt",
///               "unseen_prompts": [5 strings]}]}.
/// Schema violations name the offending entry and field. Relative image
/// paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Validation shared with programmatic construction.
void validate_manifest(const DatasetManifest& manifest);

}  // namespace immunize
