// Acceptance suite: one check per release criterion, one pass/fail line
// each. Exits non-zero if any criterion fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "immunize/image_io.hpp"
#include "immunize/isr.hpp"
#include "immunize/pipeline.hpp"
#include "immunize/report.hpp"
#include "immunize/rng.hpp"
#include "immunize/sifm.hpp"
#include "immunize/toy_backend.hpp"
#include "immunize/util.hpp"

using namespace immunize;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
    if (!condition) throw Failure(message);
}

ImageBuffer random_image(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    SplitMix64 rng(seed);
    std::vector<double> data(static_cast<std::size_t>(h) * w * 3);
    for (double& v : data) v = lo + (hi - lo) * rng.next_double();
    return ImageBuffer(h, w, std::move(data));
}

ImageBuffer pattern_image(int h, int w) {
    std::vector<double> data(static_cast<std::size_t>(h) * w * 3);
    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                data[i++] = 0.1 + 0.8 * ((y * 31 + x * 17 + c * 29) % 64) / 63.0;
            }
        }
    }
    return ImageBuffer(h, w, std::move(data));
}

double relative_error(const Tensor& a, const Tensor& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        diff += d * d;
        na += a.data[i] * a.data[i];
        nb += b.data[i] * b.data[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    return denom == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

class ScratchDir {
public:
    ScratchDir() {
        path_ = fs::temp_directory_path() /
                ("immunize_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// 1. Constraint suite: 50 randomized immunize runs keep every iterate inside
//    the epsilon ball and the pixel box. Zero tolerance, under 2 minutes.
void criterion_constraints() {
    const auto start = std::chrono::steady_clock::now();
    const ToyBackend backend;
    SplitMix64 rng(0xC0157A1ULL);
    const std::vector<std::vector<int>> timestep_choices = {{2, 5, 8}, {2, 5}, {5, 8}, {3}};
    for (int run = 0; run < 50; ++run) {
        const ImageBuffer x = random_image(32, 32, rng.next_u64());
        SifmConfig config;
        config.epsilon = 0.03;
        config.alpha = 0.002 + 0.08 * rng.next_double() * 0.1;
        config.iterations = 2 + static_cast<int>(rng.next_u64() % 3);
        config.lambda = (run % 3 == 0) ? 0.0 : (run % 3 == 1 ? 0.1 : 1.0);
        config.timesteps = TimestepSet(timestep_choices[run % timestep_choices.size()]);
        const EditPrompt prompt{"prompt " + std::to_string(run), {}};

        const ImmunizeResult result = immunize::immunize(x, prompt, backend, config);
        require(result.trace.records.size() == static_cast<std::size_t>(config.iterations),
                "trace length must equal the iteration count");
        for (const TraceRecord& rec : result.trace.records) {
            require(rec.delta_linf <= 0.03, "|delta|_inf exceeded the 0.03 budget");
            require(rec.x_min >= 0.0 && rec.x_max <= 1.0, "immunized pixels left [0, 1]");
        }
        for (double v : result.image.data()) {
            require(v >= 0.0 && v <= 1.0, "final image left [0, 1]");
        }
        require(result.trace.final_perturbation->linf_norm() <= 0.03,
                "final perturbation exceeded the budget");
    }
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - start);
    require(elapsed.count() < 120, "constraint suite exceeded the 2 minute budget");
}

// ---------------------------------------------------------------------------
// 2. Gradient oracle: analytic pixel gradients of L_norm, L_dist and the
//    combined objective match central finite differences (step 1e-5) with
//    relative error < 1e-4 on a 16x16 fixture. Under 1 minute.
void criterion_gradient_oracle() {
    const auto start = std::chrono::steady_clock::now();
    const ToyBackend backend;
    const ImageBuffer base = pattern_image(16, 16);
    const int t = 5;
    const FeatureTensor phi_orig = backend.aggregate_features(base, EditPrompt{"probe", {}}, t);
    const EditPrompt prompt{"probe", {}};

    // Probe away from the reference point so the distance term has signal.
    const ImageBuffer x = apply_perturbation(
        base, Perturbation(16, 16, std::vector<double>(16 * 16 * 3, 0.01), 0.02));

    const SifmLoss norm_loss(phi_orig.values, 0.0, DistanceKind::MeanSquaredError, true, false);
    const SifmLoss dist_loss(phi_orig.values, 1.0, DistanceKind::MeanSquaredError, false, true);
    const SifmLoss sifm_loss(phi_orig.values, 0.1, DistanceKind::MeanSquaredError, true, true);

    Tensor fd_norm = Tensor::zeros({16, 16, 3});
    Tensor fd_dist = Tensor::zeros({16, 16, 3});
    Tensor fd_sifm = Tensor::zeros({16, 16, 3});
    std::vector<double> data = x.data();
    const double h = 1e-5;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double original = data[i];
        data[i] = original + h;
        const Tensor up = backend.aggregate_features(ImageBuffer(16, 16, data), prompt, t).values;
        data[i] = original - h;
        const Tensor down =
            backend.aggregate_features(ImageBuffer(16, 16, data), prompt, t).values;
        data[i] = original;
        fd_norm.data[i] = (norm_loss.value(up) - norm_loss.value(down)) / (2 * h);
        fd_dist.data[i] = (dist_loss.value(up) - dist_loss.value(down)) / (2 * h);
        fd_sifm.data[i] = (sifm_loss.value(up) - sifm_loss.value(down)) / (2 * h);
    }

    const TimestepLoss norm_item{t, &norm_loss};
    const TimestepLoss dist_item{t, &dist_loss};
    const TimestepLoss sifm_item{t, &sifm_loss};
    const double err_norm =
        relative_error(backend.loss_gradient(x, prompt, std::span(&norm_item, 1)), fd_norm);
    const double err_dist =
        relative_error(backend.loss_gradient(x, prompt, std::span(&dist_item, 1)), fd_dist);
    const double err_sifm =
        relative_error(backend.loss_gradient(x, prompt, std::span(&sifm_item, 1)), fd_sifm);
    require(err_norm < 1e-4, "L_norm gradient error " + std::to_string(err_norm));
    require(err_dist < 1e-4, "L_dist gradient error " + std::to_string(err_dist));
    require(err_sifm < 1e-4, "combined gradient error " + std::to_string(err_sifm));

    const auto elapsed =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - start);
    require(elapsed.count() < 60, "gradient oracle exceeded the 1 minute budget");
}

// ---------------------------------------------------------------------------
// 3. Objective behavior: lambda = 0 lowers L_norm, the distance-only variant
//    raises L_dist, and at lambda = 0.1 both trends hold together on at
//    least 8 of 10 fixtures.
void criterion_objective_behavior() {
    const ToyBackend backend;
    const EditPrompt prompt{"objective probe", {}};

    auto sum_map = [](const std::map<int, double>& m) {
        double acc = 0.0;
        for (const auto& [t, v] : m) acc += v;
        return acc;
    };

    int both_trend_count = 0;
    for (int i = 0; i < 10; ++i) {
        const ImageBuffer x = random_image(16, 16, 1000 + i, 0.05, 0.95);

        SifmConfig norm_only;
        norm_only.lambda = 0.0;
        norm_only.iterations = 10;
        norm_only.timesteps = TimestepSet({2, 5});
        const ImmunizeResult norm_run = immunize::immunize(x, prompt, backend, norm_only);
        require(sum_map(norm_run.trace.final_loss_norm_by_t) <=
                    sum_map(norm_run.trace.records.front().loss_norm_by_t),
                "lambda = 0 run failed to lower L_norm on fixture " + std::to_string(i));

        SifmConfig dist_only;
        dist_only.use_norm = false;
        dist_only.iterations = 10;
        dist_only.timesteps = TimestepSet({2, 5});
        const ImmunizeResult dist_run = immunize::immunize(x, prompt, backend, dist_only);
        require(sum_map(dist_run.trace.final_loss_dist_by_t) >=
                    sum_map(dist_run.trace.records.front().loss_dist_by_t),
                "distance-only run failed to raise L_dist on fixture " + std::to_string(i));

        SifmConfig both;
        both.lambda = 0.1;
        both.iterations = 10;
        both.timesteps = TimestepSet({2, 5});
        const ImmunizeResult both_run = immunize::immunize(x, prompt, backend, both);
        const bool norm_down = sum_map(both_run.trace.final_loss_norm_by_t) <=
                               sum_map(both_run.trace.records.front().loss_norm_by_t);
        const bool dist_up = sum_map(both_run.trace.final_loss_dist_by_t) >=
                             sum_map(both_run.trace.records.front().loss_dist_by_t);
        if (norm_down && dist_up) ++both_trend_count;
    }
    require(both_trend_count >= 8, "combined trends held on only " +
                                       std::to_string(both_trend_count) + " of 10 fixtures");
}

// ---------------------------------------------------------------------------
// 4. PGD step unit truth table: descent, sign(0) and clamping behave exactly
//    as specified.
void criterion_pgd_truth_table() {
    {
        const Perturbation delta = Perturbation::zeros(2, 2, 0.03);
        Tensor g = Tensor::zeros({2, 2, 3});
        for (double& v : g.data) v = 2.5;
        const Perturbation stepped = pgd_step(delta, g, 0.005, 0.03);
        for (double v : stepped.data()) {
            require(v == -0.005, "descent step must move against the gradient sign");
        }
    }
    {
        const std::vector<double> d(12, 0.01);
        const Perturbation delta(2, 2, d, 0.03);
        const Tensor g = Tensor::zeros({2, 2, 3});
        require(pgd_step(delta, g, 0.005, 0.03).data() == d, "sign(0) must leave delta unchanged");
    }
    {
        const Perturbation delta(2, 2, std::vector<double>(12, -0.029), 0.03);
        Tensor g = Tensor::zeros({2, 2, 3});
        for (double& v : g.data) v = 1.0;
        const Perturbation clamped = pgd_step(delta, g, 0.005, 0.03);
        for (double v : clamped.data()) {
            require(v == -0.03, "projection must clamp at the epsilon boundary");
        }
    }
}

// ---------------------------------------------------------------------------
// 5. Strict-agreement oracle: exhaustive enumeration over all 2^(2k) verdict
//    combinations for k = 2 and k = 3 judges.
void criterion_strict_agreement() {
    for (int judges : {2, 3}) {
        const int combos = 1 << (2 * judges);
        for (int mask = 0; mask < combos; ++mask) {
            std::vector<JudgeVerdict> verdicts;
            bool expected = true;
            for (int j = 0; j < judges; ++j) {
                const bool mismatch = (mask >> (2 * j)) & 1;
                const bool degradation = (mask >> (2 * j + 1)) & 1;
                JudgeVerdict v;
                v.judge_id = "judge-" + std::to_string(j);
                v.valid = true;
                v.semantic_mismatch = mismatch;
                v.perceptual_degradation = degradation;
                v.success = mismatch || degradation;
                require(v.success == (mismatch || degradation),
                        "success must be the criterion disjunction");
                verdicts.push_back(v);
                expected = expected && (mismatch || degradation);
            }
            require(aggregate_strict(verdicts) == expected,
                    "strict aggregation disagreed with enumeration at mask " +
                        std::to_string(mask));
        }
    }
}

// ---------------------------------------------------------------------------
// 6. ISR arithmetic: hand counts, the 79/100 case, and reconciling
//    breakdowns.
void criterion_isr_arithmetic() {
    auto record = [](bool success, const std::string& mode, const std::string& category) {
        EvaluationRecord rec;
        rec.sample_id = "s";
        rec.prompt_mode = mode;
        rec.category = category;
        rec.final_success = success;
        return rec;
    };

    std::vector<EvaluationRecord> headline;
    for (int i = 0; i < 79; ++i) {
        headline.push_back(record(true, i % 2 ? "original" : "unseen",
                                  i % 3 == 0 ? "portrait" : (i % 3 == 1 ? "landscape" : "artwork")));
    }
    for (int i = 0; i < 21; ++i) {
        headline.push_back(record(false, i % 2 ? "original" : "unseen", "portrait"));
    }
    const IsrSummary summary = compute_isr(headline);
    require(summary.n_success == 79 && summary.n_total == 100, "hand count mismatch");
    require(std::abs(summary.isr - 0.79) < 1e-12, "79/100 must give 0.79");

    int mode_total = 0, mode_success = 0, cat_total = 0, cat_success = 0;
    for (const auto& [mode, cell] : summary.by_prompt_mode) {
        mode_total += cell.n_total;
        mode_success += cell.n_success;
    }
    for (const auto& [category, cell] : summary.by_category) {
        cat_total += cell.n_total;
        cat_success += cell.n_success;
    }
    require(mode_total == 100 && mode_success == 79, "prompt-mode breakdown must reconcile");
    require(cat_total == 100 && cat_success == 79, "category breakdown must reconcile");

    require(compute_isr(std::vector<EvaluationRecord>(10, record(false, "original", "portrait")))
                    .isr == 0.0,
            "0 of 10 must give 0.0");
    require(compute_isr(std::vector<EvaluationRecord>(10, record(true, "original", "portrait")))
                    .isr == 1.0,
            "10 of 10 must give 1.0");
}

// ---------------------------------------------------------------------------
// 7. Metric oracles: the analytic PSNR and SSIM cases plus agreement with an
//    independent sliding-window recomputation on five fixture pairs.
void criterion_metric_oracles() {
    const ImageBuffer a = pattern_image(16, 16);
    std::vector<double> shifted = a.data();
    for (double& v : shifted) v += 0.1;
    const ImageBuffer b(16, 16, shifted);
    require(std::abs(psnr(a, b) - 20.0) < 1e-9, "MSE 0.01 must give exactly 20 dB");
    require(psnr(a, a) == 100.0, "identical images must hit the PSNR cap");
    require(std::abs(ssim(a, a) - 1.0) < 1e-9, "SSIM of identical images must be 1");

    const double c1 = 1e-4;
    const double constant_case =
        ssim(ImageBuffer::filled(16, 16, 0.0), ImageBuffer::filled(16, 16, 1.0));
    require(std::abs(constant_case - c1 / (1.0 + c1)) < 1e-9,
            "constant-image SSIM must match the analytic value");

    // Independent direct-window recomputation.
    auto ssim_oracle = [](const ImageBuffer& u, const ImageBuffer& v) {
        constexpr int win = 11;
        const double sigma = 1.5, C1 = 1e-4, C2 = 9e-4;
        double kernel[win][win], ksum = 0.0;
        for (int i = 0; i < win; ++i) {
            for (int j = 0; j < win; ++j) {
                kernel[i][j] =
                    std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * sigma * sigma));
                ksum += kernel[i][j];
            }
        }
        for (auto& row : kernel) {
            for (double& w : row) w /= ksum;
        }
        double total = 0.0;
        long count = 0;
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y + win <= u.height(); ++y) {
                for (int x = 0; x + win <= u.width(); ++x) {
                    double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                    for (int i = 0; i < win; ++i) {
                        for (int j = 0; j < win; ++j) {
                            const double w = kernel[i][j];
                            const double va = u.at(y + i, x + j, c);
                            const double vb = v.at(y + i, x + j, c);
                            ma += w * va;
                            mb += w * vb;
                            saa += w * va * va;
                            sbb += w * vb * vb;
                            sab += w * va * vb;
                        }
                    }
                    total += ((2 * ma * mb + C1) * (2 * (sab - ma * mb) + C2)) /
                             ((ma * ma + mb * mb + C1) *
                              ((saa - ma * ma) + (sbb - mb * mb) + C2));
                    ++count;
                }
            }
        }
        return total / count;
    };
    auto psnr_oracle = [](const ImageBuffer& u, const ImageBuffer& v) {
        double mse = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double d = u.data()[i] - v.data()[i];
            mse += d * d;
        }
        mse /= static_cast<double>(u.size());
        return mse == 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / mse));
    };

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ImageBuffer u = random_image(15, 13, seed);
        SplitMix64 rng(seed * 31);
        std::vector<double> noisy = u.data();
        for (double& v : noisy) v = std::clamp(v + 0.2 * (rng.next_double() - 0.5), 0.0, 1.0);
        const ImageBuffer v(15, 13, noisy);
        require(std::abs(ssim(u, v) - ssim_oracle(u, v)) < 1e-7,
                "SSIM diverged from the sliding-window oracle");
        require(std::abs(psnr(u, v) - psnr_oracle(u, v)) < 1e-7,
                "PSNR diverged from the element-wise oracle");
    }
}

// ---------------------------------------------------------------------------
// 8. Determinism and idempotence: two pipeline runs over the 2-entry fixture
//    manifest give byte-identical reports; the second performs zero backend
//    edits and zero judge calls.
void criterion_idempotence() {
    ScratchDir scratch;
    save_image(pattern_image(16, 16), scratch.path() / "alpha.png");
    save_image(random_image(16, 16, 77, 0.05, 0.95), scratch.path() / "beta.png");
    nlohmann::json doc;
    nlohmann::json a;
    a["id"] = "alpha";
    a["image"] = "alpha.png";
    a["category"] = "portrait";
    a["original_prompt"] = "turn the sky purple";
    a["unseen_prompts"] = {"u1", "u2", "u3", "u4", "u5"};
    nlohmann::json b = a;
    b["id"] = "beta";
    b["image"] = "beta.png";
    b["category"] = "landscape";
    b["original_prompt"] = "make the house wooden";
    doc["entries"] = nlohmann::json::array({a, b});
    std::ofstream(scratch.path() / "manifest.json") << doc.dump(2);
    const DatasetManifest manifest = load_manifest(scratch.path() / "manifest.json");

    const char* success =
        R"({"semantic_mismatch": true, "quality_degradation": false, "rationale": "mock"})";
    const char* failure =
        R"({"semantic_mismatch": false, "quality_degradation": false, "rationale": "mock"})";
    MockJudge judge_a("mock-a", failure,
                      {{"turn the sky purple", success}});
    MockJudge judge_b("mock-b", failure,
                      {{"turn the sky purple", success}});
    std::vector<JudgeClient*> judges = {&judge_a, &judge_b};
    const MetricRegistry metrics;
    const ToyBackend backend;

    RunConfig config;
    config.sifm.iterations = 2;
    config.sifm.timesteps = TimestepSet({2, 5});
    config.prompt_mode = PromptMode::Original;
    config.output_dir = scratch.path() / "runs";

    const PipelineResult first = run_pipeline(manifest, backend, judges, metrics, config);
    emit_report(first.records, first.summary, config.output_dir);
    const auto csv1 = read_binary_file(config.output_dir / "records.csv");
    const auto json1 = read_binary_file(config.output_dir / "records.json");
    const auto summary1 = read_binary_file(config.output_dir / "summary.json");
    require(first.stats.edits_computed > 0, "first run must perform edits");

    const PipelineResult second = run_pipeline(manifest, backend, judges, metrics, config);
    emit_report(second.records, second.summary, config.output_dir);
    require(second.stats.edits_computed == 0, "second run must perform zero backend edits");
    require(second.stats.judge_calls == 0, "second run must perform zero judge calls");
    require(second.stats.immunizations_computed == 0,
            "second run must reuse the immunized images");
    require(read_binary_file(config.output_dir / "records.csv") == csv1,
            "records.csv must be byte-identical across runs");
    require(read_binary_file(config.output_dir / "records.json") == json1,
            "records.json must be byte-identical across runs");
    require(read_binary_file(config.output_dir / "summary.json") == summary1,
            "summary.json must be byte-identical across runs");
}

// ---------------------------------------------------------------------------
// 9. Protocol constants: default config carries epsilon 0.03, 100
//    iterations, lambda 0.1; a paper-shaped 100-entry manifest yields
//    exactly 500 unseen-prompt edit jobs.
void criterion_protocol_constants() {
    const SifmConfig config;
    require(config.epsilon == 0.03, "default epsilon must be 0.03");
    require(config.iterations == 100, "default iteration count must be 100");
    require(config.lambda == 0.1, "default lambda must be 0.1");

    DatasetManifest manifest;
    for (int i = 0; i < 100; ++i) {
        ManifestEntry entry;
        entry.id = "img" + std::to_string(i);
        entry.image = entry.id + ".png";
        entry.category = i < 35 ? "portrait" : (i < 70 ? "landscape" : "artwork");
        entry.original_prompt = "original";
        entry.unseen_prompts = {"u1", "u2", "u3", "u4", "u5"};
        manifest.entries.push_back(std::move(entry));
    }
    validate_manifest(manifest);
    require(plan_edit_jobs(manifest, PromptMode::Unseen).size() == 500,
            "100 entries must plan exactly 500 unseen-prompt edit jobs");
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* description;
        std::function<void()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "constraint suite: 50 randomized runs stay inside the budget box",
         criterion_constraints},
        {2, "gradient oracle: analytic vs central finite differences < 1e-4",
         criterion_gradient_oracle},
        {3, "objective behavior: norm falls, distance rises, both at lambda 0.1",
         criterion_objective_behavior},
        {4, "pgd step truth table: descent, sign(0), clamp", criterion_pgd_truth_table},
        {5, "strict agreement matches exhaustive enumeration for 2 and 3 judges",
         criterion_strict_agreement},
        {6, "ISR arithmetic reproduces hand counts and reconciles breakdowns",
         criterion_isr_arithmetic},
        {7, "metric oracles: analytic PSNR/SSIM cases and recomputation agreement",
         criterion_metric_oracles},
        {8, "determinism and idempotence of the two-run fixture pipeline",
         criterion_idempotence},
        {9, "protocol constants: epsilon 0.03, N 100, lambda 0.1, 500 unseen jobs",
         criterion_protocol_constants},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        try {
            criterion.run();
            std::printf("[PASS] criterion %d: %s\n", criterion.id, criterion.description);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] criterion %d: %s -- %s\n", criterion.id, criterion.description,
                        e.what());
        }
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
