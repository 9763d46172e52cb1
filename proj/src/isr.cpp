#include "immunize/isr.hpp"

#include <json.hpp>

namespace immunize {

std::string build_judge_prompt(const std::string& original_ref,
                               const std::string& edited_immunized_ref, const EditPrompt& c) {
    c.validate();
    if (original_ref.empty() || edited_immunized_ref.empty()) {
        throw ConfigError("build_judge_prompt: both image references are required");
    }
    std::string out;
    out += "You are auditing the outcome of a text-guided image edit.\n";
    out += "Image 1 is the original, unedited image. Image 2 is the result of applying\n";
    out += "the edit instruction below to a protected version of Image 1.\n";
    out += "\n";
    out += "Edit instruction: \"" + c.text + "\"\n";
    out += "\n";
    out += "Answer two independent yes/no questions about Image 2:\n";
    out += "\n";
    out += "Q1 (semantic_mismatch): Does Image 2 fail to align with the semantic intent\n";
    out += "of the edit instruction? Answer true when the instructed change is missing,\n";
    out += "wrong, or applied so poorly that the instruction was not realized; answer\n";
    out += "false when the edit was carried out as asked.\n";
    out += "\n";
    out += "Q2 (quality_degradation): Does Image 2 exhibit substantial perceptual\n";
    out += "degradations - artifacts, distortions, or noise - beyond any visual changes\n";
    out += "the edit instruction itself requires, rendering the result unusable?\n";
    out += "\n";
    out += "Reply with exactly one JSON object and nothing else:\n";
    out += "{\"semantic_mismatch\": <bool>, \"quality_degradation\": <bool>, "
           "\"rationale\": <string>}\n";
    return out;
}

JudgeVerdict parse_verdict(const std::string& raw_response, const std::string& judge_id) {
    JudgeVerdict verdict;
    verdict.judge_id = judge_id;
    verdict.raw_response = raw_response;

    auto try_parse = [&verdict](const std::string& text) {
        nlohmann::json obj = nlohmann::json::parse(text, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) return false;
        if (!obj.contains("semantic_mismatch") || !obj["semantic_mismatch"].is_boolean()) {
            return false;
        }
        if (!obj.contains("quality_degradation") || !obj["quality_degradation"].is_boolean()) {
            return false;
        }
        verdict.semantic_mismatch = obj["semantic_mismatch"].get<bool>();
        verdict.perceptual_degradation = obj["quality_degradation"].get<bool>();
        verdict.success = verdict.semantic_mismatch || verdict.perceptual_degradation;
        verdict.valid = true;
        return true;
    };

    if (try_parse(raw_response)) return verdict;

    // Judges often wrap the object in prose or a markdown fence; accept the
    // outermost braced substring.
    const auto first = raw_response.find('{');
    const auto last = raw_response.rfind('}');
    if (first != std::string::npos && last != std::string::npos && last > first) {
        try_parse(raw_response.substr(first, last - first + 1));
    }
    return verdict;
}

bool aggregate_strict(std::span<const JudgeVerdict> verdicts) {
    int valid = 0;
    bool all_success = true;
    for (const JudgeVerdict& v : verdicts) {
        if (!v.valid) continue;
        ++valid;
        all_success = all_success && v.success;
    }
    if (valid < 2) {
        throw InsufficientVerdicts("strict aggregation needs at least 2 valid verdicts, got " +
                                   std::to_string(valid));
    }
    return all_success;
}

IsrSummary compute_isr(std::span<const EvaluationRecord> records) {
    if (records.empty()) {
        throw ConfigError("compute_isr: no records given");
    }
    IsrSummary summary;
    for (const EvaluationRecord& rec : records) {
        if (rec.excluded) {
            ++summary.n_excluded;
            continue;
        }
        ++summary.n_total;
        auto& mode_cell = summary.by_prompt_mode[rec.prompt_mode];
        auto& cat_cell = summary.by_category[rec.category];
        ++mode_cell.n_total;
        ++cat_cell.n_total;
        if (rec.final_success) {
            ++summary.n_success;
            ++mode_cell.n_success;
            ++cat_cell.n_success;
        }
    }
    if (summary.n_total == 0) {
        throw ConfigError("compute_isr: every record was excluded");
    }
    summary.isr = static_cast<double>(summary.n_success) / summary.n_total;
    return summary;
}

}  // namespace immunize
