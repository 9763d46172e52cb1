// immunize-kit: batch immunization, evaluation, ablation sweeps and report
// emission over a dataset manifest.

#include <cstdio>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "immunize/image_io.hpp"
#include "immunize/pipeline.hpp"
#include "immunize/remote_backend.hpp"
#include "immunize/report.hpp"
#include "immunize/toy_backend.hpp"
#include "immunize/util.hpp"

namespace {

using namespace immunize;

struct BackendOptions {
    std::string kind = "toy";
    std::string remote_url;
    std::vector<std::string> layers;
    std::uint64_t seed = 0;
};

struct SifmOptions {
    double epsilon = 0.03;
    double alpha = 0.005;
    int iters = 100;
    double lambda = 0.1;
    std::vector<int> timesteps = {2, 5, 8};
    std::string distance = "mse";
};

void add_backend_options(CLI::App* cmd, BackendOptions& opts) {
    cmd->add_option("--backend", opts.kind, "Editing backend: toy or remote")
        ->check(CLI::IsMember({"toy", "remote"}))
        ->capture_default_str();
    cmd->add_option("--remote-url", opts.remote_url,
                    "Base URL of a remote adapter (required with --backend remote)");
    cmd->add_option("--layers", opts.layers,
                    "Targeted intermediate layers (default: bottleneck,dec1)")
        ->delimiter(',');
    cmd->add_option("--seed", opts.seed, "Latent-noise seed")->capture_default_str();
}

void add_sifm_options(CLI::App* cmd, SifmOptions& opts) {
    cmd->add_option("--epsilon", opts.epsilon, "L-infinity budget")->capture_default_str();
    cmd->add_option("--alpha", opts.alpha, "PGD step size")->capture_default_str();
    cmd->add_option("--iters", opts.iters, "Optimization iterations")->capture_default_str();
    cmd->add_option("--lambda", opts.lambda, "Distance-term weight")->capture_default_str();
    cmd->add_option("--timesteps", opts.timesteps, "Diffusion timesteps, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--distance", opts.distance, "Feature distance: mse or sse")
        ->check(CLI::IsMember({"mse", "sse"}))
        ->capture_default_str();
}

std::unique_ptr<EditingBackend> make_backend(const BackendOptions& opts) {
    BackendDescriptor descriptor = ToyBackend::default_descriptor(opts.seed);
    if (!opts.layers.empty()) descriptor.layer_selection = opts.layers;
    if (opts.kind == "toy") {
        return std::make_unique<ToyBackend>(descriptor);
    }
    if (opts.remote_url.empty()) {
        throw ConfigError("--backend remote requires --remote-url");
    }
    descriptor.name = "remote";
    RemoteBackendConfig config;
    config.base_url = opts.remote_url;
    return std::make_unique<RemoteBackend>(config, descriptor);
}

SifmConfig make_sifm_config(const SifmOptions& opts, std::uint64_t seed) {
    SifmConfig config;
    config.epsilon = opts.epsilon;
    config.alpha = opts.alpha;
    config.iterations = opts.iters;
    config.lambda = opts.lambda;
    config.timesteps = TimestepSet(opts.timesteps);
    config.distance = opts.distance == "sse" ? DistanceKind::SumSquaredError
                                             : DistanceKind::MeanSquaredError;
    config.seed = seed;
    return config;
}

constexpr const char* kMockSuccess =
    R"({"semantic_mismatch": true, "quality_degradation": false, "rationale": "mock"})";
constexpr const char* kMockFailure =
    R"({"semantic_mismatch": false, "quality_degradation": false, "rationale": "mock"})";

struct JudgePool {
    std::vector<std::unique_ptr<JudgeClient>> owned;
    std::vector<JudgeClient*> refs;
};

/// Mock script file: {"judges": [{"id", "default", "rules": [{"needle",
/// "response"}]}]}. Without a script, two mock judges answer "edit
/// succeeded" (an immunization failure) for every sample.
JudgePool make_judges(const std::string& kind, const std::string& mock_script,
                      const std::vector<std::string>& endpoints,
                      const std::vector<std::string>& models, double temperature) {
    JudgePool pool;
    if (kind == "mock") {
        if (!mock_script.empty()) {
            nlohmann::json doc = nlohmann::json::parse(read_text_file(mock_script));
            for (const auto& judge : doc.at("judges")) {
                std::vector<MockJudge::Rule> rules;
                for (const auto& rule : judge.value("rules", nlohmann::json::array())) {
                    rules.push_back(MockJudge::Rule{rule.at("needle").get<std::string>(),
                                                    rule.at("response").get<std::string>()});
                }
                pool.owned.push_back(std::make_unique<MockJudge>(
                    judge.at("id").get<std::string>(),
                    judge.value("default", std::string(kMockFailure)), std::move(rules)));
            }
        } else {
            pool.owned.push_back(std::make_unique<MockJudge>("mock-a", kMockFailure));
            pool.owned.push_back(std::make_unique<MockJudge>("mock-b", kMockFailure));
        }
    } else {
        if (endpoints.size() < 2 || endpoints.size() != models.size()) {
            throw ConfigError(
                "--judges http needs matching --judge-endpoint/--judge-model pairs (>= 2)");
        }
        for (std::size_t i = 0; i < endpoints.size(); ++i) {
            HttpJudgeConfig config;
            config.id = "judge-" + std::to_string(i + 1) + "-" + models[i];
            config.endpoint = endpoints[i];
            config.model = models[i];
            config.temperature = temperature;
            pool.owned.push_back(std::make_unique<HttpJudge>(config));
        }
    }
    for (auto& judge : pool.owned) pool.refs.push_back(judge.get());
    return pool;
}

void print_category_counts(const DatasetManifest& manifest) {
    std::printf("manifest: %zu entries (", manifest.entries.size());
    bool first = true;
    for (const auto& [category, count] : manifest.category_counts()) {
        std::printf("%s%s: %d", first ? "" : ", ", category.c_str(), count);
        first = false;
    }
    std::printf(")\n");
}

void print_stats(const PipelineStats& stats) {
    std::printf("immunizations: %d computed, %d reused\n", stats.immunizations_computed,
                stats.immunizations_reused);
    std::printf("edits: %d computed, %d cached\n", stats.edits_computed, stats.edits_cached);
    std::printf("judge calls: %d live, %d cached\n", stats.judge_calls, stats.judge_cache_hits);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Image immunization toolkit: perturbation generation, editing evaluation "
                 "and ISR reporting"};
    app.require_subcommand(1);

    std::string manifest_path;
    std::string out_dir;
    std::string runs_dir;
    std::string cache_dir;
    std::string prompt_mode = "both";
    std::string judges_kind = "mock";
    std::string mock_script;
    std::vector<std::string> judge_endpoints;
    std::vector<std::string> judge_models;
    double judge_temperature = 0.0;
    std::uint64_t edit_seed = 0;
    int parallel = 1;
    BackendOptions backend_opts;
    SifmOptions sifm_opts;

    auto* immunize_cmd = app.add_subcommand(
        "immunize", "Generate immunized images and optimization traces for a manifest");
    immunize_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
    immunize_cmd->add_option("--out", out_dir, "Output directory")->required();
    immunize_cmd->add_option("--parallel", parallel, "Concurrent samples")->capture_default_str();
    add_backend_options(immunize_cmd, backend_opts);
    add_sifm_options(immunize_cmd, sifm_opts);

    auto* evaluate_cmd = app.add_subcommand(
        "evaluate", "Edit originals and immunized images, compute metrics and judge verdicts");
    evaluate_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
    evaluate_cmd->add_option("--runs", runs_dir, "Run directory (immunized images live here)")
        ->required();
    evaluate_cmd->add_option("--prompt-mode", prompt_mode, "original, unseen or both")
        ->check(CLI::IsMember({"original", "unseen", "both"}))
        ->capture_default_str();
    evaluate_cmd->add_option("--judges", judges_kind, "mock or http")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
    evaluate_cmd->add_option("--mock-script", mock_script, "Scripted mock judge rules (JSON)");
    evaluate_cmd->add_option("--judge-endpoint", judge_endpoints, "HTTP judge endpoint URL")
        ->expected(-1);
    evaluate_cmd->add_option("--judge-model", judge_models, "HTTP judge model name")->expected(-1);
    evaluate_cmd->add_option("--judge-temperature", judge_temperature, "Judge temperature")
        ->capture_default_str();
    evaluate_cmd->add_option("--edit-seed", edit_seed, "Sampler seed for edits")
        ->capture_default_str();
    evaluate_cmd->add_option("--cache-dir", cache_dir, "Cache root (default: $IMMUNIZE_CACHE_DIR "
                                                       "or <runs>/cache)");
    evaluate_cmd->add_option("--parallel", parallel, "Concurrent samples")->capture_default_str();
    add_backend_options(evaluate_cmd, backend_opts);
    add_sifm_options(evaluate_cmd, sifm_opts);

    auto* ablate_cmd = app.add_subcommand(
        "ablate", "Sweep lambda values and/or objective components, one pipeline run per cell");
    std::vector<double> lambda_sweep;
    std::vector<std::string> component_masks;
    ablate_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
    ablate_cmd->add_option("--out", out_dir, "Output directory")->required();
    ablate_cmd->add_option("--lambda-sweep", lambda_sweep, "Lambda values, comma separated")
        ->delimiter(',');
    ablate_cmd->add_option("--components", component_masks,
                           "Component masks from {dist, norm, both}, comma separated")
        ->delimiter(',');
    ablate_cmd->add_option("--prompt-mode", prompt_mode, "original, unseen or both")
        ->check(CLI::IsMember({"original", "unseen", "both"}))
        ->capture_default_str();
    ablate_cmd->add_option("--judges", judges_kind, "mock or http")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
    ablate_cmd->add_option("--mock-script", mock_script, "Scripted mock judge rules (JSON)");
    ablate_cmd->add_option("--judge-endpoint", judge_endpoints, "HTTP judge endpoint URL")
        ->expected(-1);
    ablate_cmd->add_option("--judge-model", judge_models, "HTTP judge model name")->expected(-1);
    ablate_cmd->add_option("--edit-seed", edit_seed, "Sampler seed for edits")
        ->capture_default_str();
    ablate_cmd->add_option("--cache-dir", cache_dir, "Cache root");
    ablate_cmd->add_option("--parallel", parallel, "Concurrent samples")->capture_default_str();
    add_backend_options(ablate_cmd, backend_opts);
    add_sifm_options(ablate_cmd, sifm_opts);

    auto* report_cmd =
        app.add_subcommand("report", "Re-emit reports from a run directory's records.json");
    std::string report_format = "csv";
    report_cmd->add_option("--runs", runs_dir, "Run directory")->required();
    report_cmd->add_option("--format", report_format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*immunize_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            print_category_counts(manifest);
            const auto backend = make_backend(backend_opts);
            RunConfig config;
            config.sifm = make_sifm_config(sifm_opts, backend_opts.seed);
            config.output_dir = out_dir;
            config.max_parallel_samples = parallel;
            config.request_isr = false;
            const PipelineStats stats = run_immunize_phase(manifest, *backend, config);
            print_stats(stats);
            std::printf("immunized images and traces written to %s\n", out_dir.c_str());
        } else if (*evaluate_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            print_category_counts(manifest);
            const auto backend = make_backend(backend_opts);
            JudgePool judges = make_judges(judges_kind, mock_script, judge_endpoints,
                                           judge_models, judge_temperature);
            MetricRegistry metrics;
            RunConfig config;
            config.sifm = make_sifm_config(sifm_opts, backend_opts.seed);
            config.edit_seed = edit_seed;
            config.prompt_mode = prompt_mode_from_name(prompt_mode);
            config.output_dir = runs_dir;
            if (!cache_dir.empty()) config.cache_dir = cache_dir;
            config.max_parallel_samples = parallel;
            const PipelineResult result =
                run_pipeline(manifest, *backend, judges.refs, metrics, config);
            emit_report(result.records, result.summary, config.output_dir);
            print_stats(result.stats);
            std::printf("ISR: %d/%d = %.4f (%d excluded)\n", result.summary.isr.n_success,
                        result.summary.isr.n_total, result.summary.isr.isr,
                        result.summary.isr.n_excluded);
            std::printf("reports written to %s\n", runs_dir.c_str());
        } else if (*ablate_cmd) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            print_category_counts(manifest);
            const auto backend = make_backend(backend_opts);
            JudgePool judges = make_judges(judges_kind, mock_script, judge_endpoints,
                                           judge_models, judge_temperature);
            MetricRegistry metrics;
            RunConfig config;
            config.sifm = make_sifm_config(sifm_opts, backend_opts.seed);
            config.edit_seed = edit_seed;
            config.prompt_mode = prompt_mode_from_name(prompt_mode);
            config.output_dir = out_dir;
            if (!cache_dir.empty()) config.cache_dir = cache_dir;
            config.max_parallel_samples = parallel;

            AblationSpec spec;
            spec.lambdas = lambda_sweep;
            for (const std::string& mask : component_masks) {
                if (mask == "dist") spec.components.push_back(ComponentMask{true, false});
                else if (mask == "norm") spec.components.push_back(ComponentMask{false, true});
                else if (mask == "both") spec.components.push_back(ComponentMask{true, true});
                else throw ConfigError("component mask must be dist, norm or both: " + mask);
            }
            const auto rows = run_ablation(manifest, *backend, judges.refs, metrics, config, spec);
            emit_ablation_report(rows, config.output_dir);
            std::printf("%s", ablation_to_csv(rows).c_str());
            std::printf("ablation reports written to %s\n", out_dir.c_str());
        } else if (*report_cmd) {
            const auto records =
                records_from_json(read_text_file(std::filesystem::path(runs_dir) / "records.json"));
            RunSummary summary;
            summary.isr = compute_isr(records);
            std::map<std::string, std::map<std::string, double>> sums;
            std::map<std::string, std::map<std::string, int>> counts;
            for (const EvaluationRecord& rec : records) {
                if (rec.excluded) continue;
                for (const auto& name : rec.metrics.names) {
                    if (const auto& value = rec.metrics.values.at(name)) {
                        sums[rec.prompt_mode][name] += *value;
                        counts[rec.prompt_mode][name] += 1;
                    }
                }
            }
            for (const auto& [mode, by_name] : sums) {
                for (const auto& [name, sum] : by_name) {
                    summary.metric_means_by_mode[mode][name] = sum / counts[mode][name];
                }
            }
            if (report_format == "csv") {
                std::printf("%s", records_to_csv(records).c_str());
            } else {
                std::printf("%s", summary_to_json(summary, records).c_str());
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
