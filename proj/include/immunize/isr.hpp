#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "immunize/backend.hpp"
#include "immunize/metrics.hpp"

namespace immunize {

/// One judge's binary findings for an edited immunized image. success is
/// derived: semantic mismatch OR perceptual degradation defeats the edit.
struct JudgeVerdict {
    std::string judge_id;
    bool valid = false;
    bool semantic_mismatch = false;
    bool perceptual_degradation = false;
    bool success = false;
    std::string raw_response;
};

/// Judge settings pinned into every evaluation record for auditability.
struct JudgeConfigNote {
    std::string judge_id;
    std::string model;
    double temperature = 0.0;
};

/// One (image, prompt) edit outcome: classical metrics between the edited
/// original and the edited immunized image, per-judge verdicts, and the
/// strict-agreement success flag.
struct EvaluationRecord {
    std::string sample_id;
    std::string category;
    std::string prompt_mode;  // "original" or "unseen"
    int prompt_index = 0;     // 0 for the original prompt, 1..5 for unseen
    std::string edit_prompt;

    std::string original_path;
    std::string immunized_path;
    std::string edited_original_path;
    std::string edited_immunized_path;

    MetricReport metrics;
    std::vector<JudgeVerdict> verdicts;
    std::vector<JudgeConfigNote> judge_configs;
    bool final_success = false;

    bool excluded = false;
    std::string exclusion_reason;
};

struct IsrCell {
    int n_success = 0;
    int n_total = 0;
    double isr() const { return n_total > 0 ? static_cast<double>(n_success) / n_total : 0.0; }
};

/// Immunization Success Rate n_success / n_total with breakdowns that
/// reconcile with the totals. Excluded samples never enter n_total.
struct IsrSummary {
    int n_success = 0;
    int n_total = 0;
    int n_excluded = 0;
    double isr = 0.0;
    std::map<std::string, IsrCell> by_prompt_mode;
    std::map<std::string, IsrCell> by_category;
};

/// Deterministic judge instruction: two independent binary questions
/// (does the edit fail the prompt's semantic intent; does the output show
/// substantial degradations beyond what the edit requires) plus the strict
/// JSON answer schema. The image references are presence-checked handles;
/// the images themselves travel alongside the instruction, so the text never
/// embeds paths.
std::string build_judge_prompt(const std::string& original_ref,
                               const std::string& edited_immunized_ref, const EditPrompt& c);

/// Extracts the two booleans from the required answer schema
/// {"semantic_mismatch": bool, "quality_degradation": bool, "rationale": str}
/// (a fenced or wrapped JSON object is tolerated). Unparseable responses
/// yield an invalid verdict; the caller routes those to retry/exclusion.
JudgeVerdict parse_verdict(const std::string& raw_response, const std::string& judge_id);

/// Strict agreement: true iff every valid verdict reports success. Any
/// dissent counts as an immunization failure. Throws InsufficientVerdicts
/// when fewer than two valid verdicts are available.
bool aggregate_strict(std::span<const JudgeVerdict> verdicts);

/// Computes the ISR over evaluated records, skipping excluded ones.
/// Throws ConfigError when no record is countable.
IsrSummary compute_isr(std::span<const EvaluationRecord> records);

}  // namespace immunize
