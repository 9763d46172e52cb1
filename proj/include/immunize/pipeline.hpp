#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "immunize/backend.hpp"
#include "immunize/isr.hpp"
#include "immunize/judge.hpp"
#include "immunize/manifest.hpp"
#include "immunize/metrics.hpp"
#include "immunize/sifm.hpp"

namespace immunize {

enum class PromptMode { Original, Unseen, Both };

std::string prompt_mode_name(PromptMode mode);
PromptMode prompt_mode_from_name(const std::string& name);

/// Everything a batch run needs beyond the manifest: the optimizer config,
/// edit seed, prompt scope, output/cache locations and judging policy.
struct RunConfig {
    SifmConfig sifm;
    std::uint64_t edit_seed = 0;
    PromptMode prompt_mode = PromptMode::Both;
    std::filesystem::path output_dir;
    std::filesystem::path cache_dir;  // empty: $IMMUNIZE_CACHE_DIR, else output_dir/cache
    int verdict_retries = 2;          // re-queries after an unparseable response
    int max_parallel_samples = 1;
    bool request_isr = true;          // requires at least two judges

    void validate(std::size_t judge_count) const;
    std::filesystem::path resolved_cache_dir() const;
};

/// One (entry, prompt) edit task.
struct EditJob {
    std::string sample_id;
    std::string prompt_mode;  // "original" or "unseen"
    int prompt_index = 0;
    std::string prompt;
};

/// The edit jobs a run will perform: one original-prompt job and/or five
/// unseen-prompt jobs per entry depending on the mode.
std::vector<EditJob> plan_edit_jobs(const DatasetManifest& manifest, PromptMode mode);

struct PipelineStats {
    int immunizations_computed = 0;
    int immunizations_reused = 0;
    int edits_computed = 0;
    int edits_cached = 0;
    int judge_calls = 0;
    int judge_cache_hits = 0;
};

struct RunSummary {
    IsrSummary isr;
    // prompt mode -> metric name -> mean over records with a value present
    std::map<std::string, std::map<std::string, double>> metric_means_by_mode;
};

struct PipelineResult {
    std::vector<EvaluationRecord> records;
    RunSummary summary;
    PipelineStats stats;
};

/// Immunizes every manifest entry with its original prompt, writing
/// immunized/<id>.png and traces/<id>.jsonl under the output directory.
/// Existing immunized images are reused, which makes re-runs resumable.
PipelineStats run_immunize_phase(const DatasetManifest& manifest, const EditingBackend& backend,
                                 const RunConfig& config);

/// Full batch: immunize, edit both the original and the immunized image
/// under each prompt in scope, compute metrics between the two edited
/// outputs, collect strict-agreement judge verdicts, and summarize. Edits
/// and judge responses are cached, so an idempotent re-run performs zero
/// backend edits and zero judge calls. Per-sample failures become recorded
/// exclusions; only configuration errors abort the run.
PipelineResult run_pipeline(const DatasetManifest& manifest, const EditingBackend& backend,
                            std::span<JudgeClient* const> judges, const MetricRegistry& metrics,
                            const RunConfig& config);

/// Objective-component mask for the ablation harness.
struct ComponentMask {
    bool use_dist = true;
    bool use_norm = true;
    std::string label() const;
};

struct AblationSpec {
    std::vector<double> lambdas;
    std::vector<ComponentMask> components;
};

struct AblationRow {
    std::string variant;
    std::map<std::string, double> metric_means;  // over the run's records
    double isr = 0.0;
};

/// One pipeline run per sweep cell (lambda values, then component masks),
/// each in its own subdirectory of config.output_dir / "ablation".
std::vector<AblationRow> run_ablation(const DatasetManifest& manifest,
                                      const EditingBackend& backend,
                                      std::span<JudgeClient* const> judges,
                                      const MetricRegistry& metrics, const RunConfig& base_config,
                                      const AblationSpec& spec);

}  // namespace immunize
