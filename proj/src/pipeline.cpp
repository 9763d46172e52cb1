#include "immunize/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "immunize/image_io.hpp"
#include "immunize/util.hpp"

namespace immunize {

namespace fs = std::filesystem;

std::string prompt_mode_name(PromptMode mode) {
    switch (mode) {
        case PromptMode::Original: return "original";
        case PromptMode::Unseen: return "unseen";
        case PromptMode::Both: return "both";
    }
    throw ConfigError("unknown prompt mode");
}

PromptMode prompt_mode_from_name(const std::string& name) {
    if (name == "original") return PromptMode::Original;
    if (name == "unseen") return PromptMode::Unseen;
    if (name == "both") return PromptMode::Both;
    throw ConfigError("prompt mode must be original, unseen or both, got '" + name + "'");
}

void RunConfig::validate(std::size_t judge_count) const {
    sifm.validate();
    if (output_dir.empty()) throw ConfigError("run config needs an output directory");
    if (request_isr && judge_count < 2) {
        throw ConfigError("ISR evaluation requires at least 2 judges, got " +
                          std::to_string(judge_count));
    }
    if (verdict_retries < 0) throw ConfigError("verdict retry count must be non-negative");
    if (max_parallel_samples < 1) throw ConfigError("sample parallelism must be at least 1");
}

fs::path RunConfig::resolved_cache_dir() const {
    if (!cache_dir.empty()) return cache_dir;
    if (const char* env = std::getenv("IMMUNIZE_CACHE_DIR"); env && *env) {
        return fs::path(env);
    }
    return output_dir / "cache";
}

std::vector<EditJob> plan_edit_jobs(const DatasetManifest& manifest, PromptMode mode) {
    std::vector<EditJob> jobs;
    const bool original = mode == PromptMode::Original || mode == PromptMode::Both;
    const bool unseen = mode == PromptMode::Unseen || mode == PromptMode::Both;
    for (const ManifestEntry& entry : manifest.entries) {
        if (original) {
            jobs.push_back(EditJob{entry.id, "original", 0, entry.original_prompt});
        }
        if (unseen) {
            for (std::size_t k = 0; k < entry.unseen_prompts.size(); ++k) {
                jobs.push_back(EditJob{entry.id, "unseen", static_cast<int>(k + 1),
                                       entry.unseen_prompts[k]});
            }
        }
    }
    return jobs;
}

namespace {

struct Counters {
    std::atomic<int> immunizations_computed{0};
    std::atomic<int> immunizations_reused{0};
    std::atomic<int> edits_computed{0};
    std::atomic<int> edits_cached{0};
    std::atomic<int> judge_calls{0};
    std::atomic<int> judge_cache_hits{0};

    PipelineStats snapshot() const {
        return PipelineStats{immunizations_computed.load(), immunizations_reused.load(),
                             edits_computed.load(),         edits_cached.load(),
                             judge_calls.load(),            judge_cache_hits.load()};
    }
};

std::string edit_cache_key(const BackendDescriptor& descriptor, const ImageBuffer& image,
                           const EditPrompt& prompt, std::uint64_t seed) {
    std::vector<std::uint8_t> blob;
    auto append_str = [&blob](const std::string& s) {
        blob.insert(blob.end(), s.begin(), s.end());
        blob.push_back(0);
    };
    append_str(descriptor.fingerprint());
    const auto content = image.content_bytes();
    blob.insert(blob.end(), content.begin(), content.end());
    blob.push_back(0);
    append_str(prompt.text);
    for (const auto& [key, value] : prompt.guidance) {
        append_str(key + "=" + format_fixed(value, 12));
    }
    append_str(std::to_string(seed));
    return sha256_hex(blob);
}

/// Edit through the content-addressed cache. Outputs pass through 8-bit
/// quantization either way (cache hits come back from PNG), so first runs
/// and re-runs see identical pixel data.
ImageBuffer cached_edit(const EditingBackend& backend, const ImageBuffer& x,
                        const EditPrompt& prompt, std::uint64_t seed, const fs::path& cache_root,
                        Counters& counters) {
    const std::string key = edit_cache_key(backend.descriptor(), x, prompt, seed);
    const fs::path path = cache_root / "edits" / (key + ".png");
    if (fs::exists(path)) {
        counters.edits_cached.fetch_add(1);
        return load_image(path);
    }
    const ImageBuffer edited = backend.edit(x, prompt, seed);
    counters.edits_computed.fetch_add(1);
    fs::create_directories(path.parent_path());
    atomic_write(path, std::span<const std::uint8_t>(encode_png(edited)));
    return quantize_to_8bit(edited);
}

ImageBuffer immunize_or_reuse(const ManifestEntry& entry, const EditingBackend& backend,
                              const RunConfig& config, Counters& counters) {
    const fs::path image_path = config.output_dir / "immunized" / (entry.id + ".png");
    if (fs::exists(image_path)) {
        counters.immunizations_reused.fetch_add(1);
        return load_image(image_path);
    }
    EditPrompt prompt{entry.original_prompt, {}};
    const ImageBuffer x_orig = load_image(entry.image);
    ImmunizeResult result = immunize(x_orig, prompt, backend, config.sifm);
    fs::create_directories(image_path.parent_path());
    save_image(result.image, image_path);
    fs::create_directories(config.output_dir / "traces");
    result.trace.save_jsonl(config.output_dir / "traces" / (entry.id + ".jsonl"));
    counters.immunizations_computed.fetch_add(1);
    // The saved artifact is the 8-bit file; evaluate exactly what was shipped.
    return quantize_to_8bit(result.image);
}

struct JudgeOutcome {
    std::vector<JudgeVerdict> verdicts;
    bool excluded = false;
    std::string reason;
};

JudgeOutcome collect_verdicts(std::span<JudgeClient* const> judges,
                              const std::string& instruction,
                              std::span<const ImageBytes> images, const VerdictCache& cache,
                              const RunConfig& config, Counters& counters) {
    JudgeOutcome outcome;
    int valid_count = 0;
    for (JudgeClient* judge : judges) {
        JudgeVerdict verdict;
        bool transport_failed = false;
        for (int attempt = 0; attempt <= config.verdict_retries; ++attempt) {
            JudgeCallResult call;
            try {
                call = judge_call(*judge, instruction, images, &cache, attempt);
            } catch (const JudgeError& e) {
                outcome.reason = std::string("judge transport failure: ") + e.what();
                transport_failed = true;
                break;
            }
            if (call.from_cache) {
                counters.judge_cache_hits.fetch_add(1);
            } else {
                counters.judge_calls.fetch_add(1);
            }
            verdict = parse_verdict(call.raw_response, judge->id());
            if (verdict.valid) break;
        }
        if (transport_failed) {
            verdict.judge_id = judge->id();
            verdict.valid = false;
        }
        if (verdict.valid) ++valid_count;
        outcome.verdicts.push_back(std::move(verdict));
    }
    if (valid_count < 2) {
        outcome.excluded = true;
        if (outcome.reason.empty()) {
            outcome.reason = "fewer than 2 valid verdicts (" + std::to_string(valid_count) +
                             ") after " + std::to_string(config.verdict_retries + 1) +
                             " parse attempts per judge";
        }
    }
    return outcome;
}

std::string job_label(const EditJob& job) {
    return job.prompt_mode == "original" ? std::string("original")
                                         : "unseen" + std::to_string(job.prompt_index);
}

void run_entries_parallel(std::size_t count, int parallelism,
                          const std::function<void(std::size_t)>& body) {
    if (parallelism <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const int worker_count = std::min<std::size_t>(parallelism, count);
    for (int w = 0; w < worker_count; ++w) {
        workers.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

PipelineStats run_immunize_phase(const DatasetManifest& manifest, const EditingBackend& backend,
                                 const RunConfig& config) {
    config.validate(config.request_isr ? 2 : 0);
    validate_manifest(manifest);
    if (!backend.supports_gradients()) {
        throw CapabilityError("immunization requires a backend with gradient support");
    }
    fs::create_directories(config.output_dir);
    Counters counters;
    run_entries_parallel(manifest.entries.size(), config.max_parallel_samples,
                         [&](std::size_t i) {
                             immunize_or_reuse(manifest.entries[i], backend, config, counters);
                         });
    return counters.snapshot();
}

PipelineResult run_pipeline(const DatasetManifest& manifest, const EditingBackend& backend,
                            std::span<JudgeClient* const> judges, const MetricRegistry& metrics,
                            const RunConfig& config) {
    config.validate(judges.size());
    validate_manifest(manifest);
    fs::create_directories(config.output_dir);
    const fs::path cache_root = config.resolved_cache_dir();
    const VerdictCache verdict_cache(cache_root);

    Counters counters;
    std::vector<JudgeConfigNote> judge_notes;
    for (JudgeClient* judge : judges) {
        judge_notes.push_back(JudgeConfigNote{judge->id(), judge->model(), judge->temperature()});
    }

    // Records slot into a fixed grid so concurrent samples cannot reorder
    // the output.
    const std::vector<EditJob> all_jobs = plan_edit_jobs(manifest, config.prompt_mode);
    const std::size_t jobs_per_entry = manifest.entries.empty()
                                           ? 0
                                           : all_jobs.size() / manifest.entries.size();
    std::vector<EvaluationRecord> records(all_jobs.size());

    auto evaluate_entry = [&](std::size_t e) {
        const ManifestEntry& entry = manifest.entries[e];
        const ImageBuffer x_orig = load_image(entry.image);
        const ImageBuffer x_imu = immunize_or_reuse(entry, backend, config, counters);
        const auto original_png = encode_png(x_orig);

        for (std::size_t j = 0; j < jobs_per_entry; ++j) {
            const EditJob& job = all_jobs[e * jobs_per_entry + j];
            EvaluationRecord rec;
            rec.sample_id = entry.id;
            rec.category = entry.category;
            rec.prompt_mode = job.prompt_mode;
            rec.prompt_index = job.prompt_index;
            rec.edit_prompt = job.prompt;
            rec.original_path = entry.image.string();
            rec.immunized_path = (config.output_dir / "immunized" / (entry.id + ".png")).string();
            rec.judge_configs = judge_notes;

            const EditPrompt prompt{job.prompt, {}};
            const ImageBuffer edited_orig =
                cached_edit(backend, x_orig, prompt, config.edit_seed, cache_root, counters);
            const ImageBuffer edited_imu =
                cached_edit(backend, x_imu, prompt, config.edit_seed, cache_root, counters);

            const std::string label = entry.id + "_" + job_label(job);
            const fs::path edits_dir = config.output_dir / "edits";
            fs::create_directories(edits_dir);
            const fs::path orig_path = edits_dir / (label + "_orig.png");
            const fs::path imu_path = edits_dir / (label + "_imu.png");
            if (!fs::exists(orig_path)) save_image(edited_orig, orig_path);
            if (!fs::exists(imu_path)) save_image(edited_imu, imu_path);
            rec.edited_original_path = orig_path.string();
            rec.edited_immunized_path = imu_path.string();

            rec.metrics = metrics.evaluate(edited_orig, edited_imu);

            if (config.request_isr) {
                const std::string instruction =
                    build_judge_prompt("original", "edited_immunized", prompt);
                const std::vector<ImageBytes> images = {original_png, encode_png(edited_imu)};
                const JudgeOutcome outcome = collect_verdicts(judges, instruction, images,
                                                              verdict_cache, config, counters);
                rec.verdicts = outcome.verdicts;
                if (outcome.excluded) {
                    rec.excluded = true;
                    rec.exclusion_reason = outcome.reason;
                } else {
                    rec.final_success = aggregate_strict(rec.verdicts);
                }
            }
            records[e * jobs_per_entry + j] = std::move(rec);
        }
    };

    run_entries_parallel(manifest.entries.size(), config.max_parallel_samples, [&](std::size_t e) {
        try {
            evaluate_entry(e);
        } catch (const ConfigError&) {
            throw;  // only configuration errors abort the run
        } catch (const CapabilityError&) {
            throw;
        } catch (const std::exception& ex) {
            // Per-sample failure: record the exclusion and keep going.
            const ManifestEntry& entry = manifest.entries[e];
            for (std::size_t j = 0; j < jobs_per_entry; ++j) {
                const EditJob& job = all_jobs[e * jobs_per_entry + j];
                EvaluationRecord rec;
                rec.sample_id = entry.id;
                rec.category = entry.category;
                rec.prompt_mode = job.prompt_mode;
                rec.prompt_index = job.prompt_index;
                rec.edit_prompt = job.prompt;
                rec.original_path = entry.image.string();
                rec.excluded = true;
                rec.exclusion_reason = std::string("sample failed: ") + ex.what();
                records[e * jobs_per_entry + j] = std::move(rec);
            }
        }
    });

    PipelineResult result;
    result.records = std::move(records);
    result.stats = counters.snapshot();

    int countable = 0;
    for (const EvaluationRecord& rec : result.records) countable += !rec.excluded;
    if (config.request_isr && countable > 0) {
        result.summary.isr = compute_isr(result.records);
    } else {
        // Nothing judgeable (or judging disabled): still report exclusions.
        for (const EvaluationRecord& rec : result.records) {
            result.summary.isr.n_excluded += rec.excluded;
        }
    }
    std::map<std::string, std::map<std::string, double>> sums;
    std::map<std::string, std::map<std::string, int>> counts;
    for (const EvaluationRecord& rec : result.records) {
        if (rec.excluded) continue;
        for (const auto& name : rec.metrics.names) {
            const auto& value = rec.metrics.values.at(name);
            if (!value) continue;
            sums[rec.prompt_mode][name] += *value;
            counts[rec.prompt_mode][name] += 1;
        }
    }
    for (const auto& [mode, by_name] : sums) {
        for (const auto& [name, sum] : by_name) {
            result.summary.metric_means_by_mode[mode][name] = sum / counts[mode][name];
        }
    }
    return result;
}

std::string ComponentMask::label() const {
    if (use_dist && use_norm) return "both";
    if (use_dist) return "dist_only";
    if (use_norm) return "norm_only";
    throw ConfigError("component mask must enable at least one objective");
}

std::vector<AblationRow> run_ablation(const DatasetManifest& manifest,
                                      const EditingBackend& backend,
                                      std::span<JudgeClient* const> judges,
                                      const MetricRegistry& metrics, const RunConfig& base_config,
                                      const AblationSpec& spec) {
    if (spec.lambdas.empty() && spec.components.empty()) {
        throw ConfigError("ablation sweep needs lambda values and/or component masks");
    }
    struct Cell {
        std::string name;
        SifmConfig sifm;
    };
    std::vector<Cell> cells;
    for (double lambda : spec.lambdas) {
        SifmConfig sifm = base_config.sifm;
        sifm.lambda = lambda;
        cells.push_back(Cell{"lambda_" + format_fixed(lambda, 3), sifm});
    }
    for (const ComponentMask& mask : spec.components) {
        SifmConfig sifm = base_config.sifm;
        sifm.use_dist = mask.use_dist;
        sifm.use_norm = mask.use_norm;
        cells.push_back(Cell{"components_" + mask.label(), sifm});
    }

    std::vector<AblationRow> rows;
    for (const Cell& cell : cells) {
        RunConfig config = base_config;
        config.sifm = cell.sifm;
        config.output_dir = base_config.output_dir / "ablation" / cell.name;
        const PipelineResult result = run_pipeline(manifest, backend, judges, metrics, config);

        AblationRow row;
        row.variant = cell.name;
        row.isr = result.summary.isr.isr;
        // Collapse modes: the sweep table reports one mean per metric.
        std::map<std::string, double> sums;
        std::map<std::string, int> counts;
        for (const EvaluationRecord& rec : result.records) {
            if (rec.excluded) continue;
            for (const auto& name : rec.metrics.names) {
                if (const auto& value = rec.metrics.values.at(name)) {
                    sums[name] += *value;
                    counts[name] += 1;
                }
            }
        }
        for (const auto& [name, sum] : sums) {
            row.metric_means[name] = sum / counts[name];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace immunize
