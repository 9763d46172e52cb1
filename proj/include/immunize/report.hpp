#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "immunize/pipeline.hpp"

namespace immunize {

/// Per-record CSV with the fixed header
/// sample,prompt_mode,psnr,ssim,vifp,fsim,lpips,success
/// (metric columns in the reporting-table order; missing plugin metrics
/// stay empty). Excluded records are not rows; they are listed in the
/// summary. Throws ConfigError on empty input.
std::string records_to_csv(std::span<const EvaluationRecord> records);

/// Lossless machine-readable form of the records.
std::string records_to_json(std::span<const EvaluationRecord> records);
std::vector<EvaluationRecord> records_from_json(const std::string& text);

/// ISR, per-mode metric means and the exclusion list.
std::string summary_to_json(const RunSummary& summary,
                            std::span<const EvaluationRecord> records);

/// Writes records.csv, records.json and summary.json into the directory.
void emit_report(std::span<const EvaluationRecord> records, const RunSummary& summary,
                 const std::filesystem::path& dir);

/// Ablation table: variant rows, metric columns in table order plus ISR.
std::string ablation_to_csv(std::span<const AblationRow> rows);
void emit_ablation_report(std::span<const AblationRow> rows, const std::filesystem::path& dir);

}  // namespace immunize
