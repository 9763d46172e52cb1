#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "immunize/backend.hpp"
#include "immunize/image.hpp"

namespace immunize {

enum class DistanceKind {
    MeanSquaredError,
    SumSquaredError,
};

/// Hyperparameters of the perturbation generator. Defaults: epsilon 0.03,
/// 100 iterations, lambda 0.1, step size 0.005, timesteps {2, 5, 8}.
struct SifmConfig {
    double epsilon = 0.03;
    double alpha = 0.005;
    int iterations = 100;
    double lambda = 0.1;
    TimestepSet timesteps{{2, 5, 8}};
    DistanceKind distance = DistanceKind::MeanSquaredError;
    std::uint64_t seed = 0;  // latent-noise seed the harness applies to the backend

    // Component switches for the ablation harness; both on by default.
    bool use_norm = true;
    bool use_dist = true;

    void validate() const;
};

/// Feature-space distance between the immunized and original trajectories.
/// Mean (default) or sum of element-wise squared differences; symmetric.
double loss_dist(const FeatureTensor& phi_imu, const FeatureTensor& phi_orig,
                 DistanceKind kind = DistanceKind::MeanSquaredError);

/// Entry-wise L1 norm of a feature tensor (sum of absolute values).
double loss_norm(const FeatureTensor& phi_imu);

/// Per-timestep objective: loss_norm(phi_imu) - lambda * loss_dist(...).
double loss_sifm_t(const FeatureTensor& phi_imu, const FeatureTensor& phi_orig, double lambda,
                   DistanceKind kind = DistanceKind::MeanSquaredError);

/// Arithmetic mean of per-timestep losses.
double loss_total(std::span<const double> per_timestep_losses);

/// One signed-gradient descent step followed by projection:
/// delta' = clamp(delta - alpha * sign(g), -epsilon, epsilon), sign(0) = 0.
Perturbation pgd_step(const Perturbation& delta, const Tensor& gradient, double alpha,
                      double epsilon);

/// The per-timestep objective as a differentiable feature loss, usable with
/// EditingBackend::loss_gradient and transportable over the adapter wire.
/// L1 subgradient at zero is 0.
class SifmLoss : public FeatureLoss {
public:
    SifmLoss(Tensor reference, double lambda, DistanceKind kind, bool use_norm = true,
             bool use_dist = true);

    double value(const Tensor& phi) const override;
    Tensor gradient(const Tensor& phi) const override;
    std::string wire_spec() const override;

    const Tensor& reference() const { return reference_; }

private:
    Tensor reference_;
    double lambda_;
    DistanceKind kind_;
    bool use_norm_;
    bool use_dist_;
};

/// One optimizer iteration. Losses are evaluated at the iterate the gradient
/// was taken at (so the first record holds the delta = 0 objective);
/// delta_linf and the pixel bounds describe the state after the update.
struct TraceRecord {
    int iter = 0;  // 1-based, matching the optimizer loop counter
    double loss_total = 0.0;
    std::map<int, double> loss_norm_by_t;
    std::map<int, double> loss_dist_by_t;
    double delta_linf = 0.0;
    double x_min = 0.0;
    double x_max = 0.0;
};

struct OptimizationTrace {
    std::vector<TraceRecord> records;
    std::optional<Perturbation> final_perturbation;

    // Objective evaluated once more at the returned image, for endpoint
    // comparisons against records.front().
    double final_loss_total = 0.0;
    std::map<int, double> final_loss_norm_by_t;
    std::map<int, double> final_loss_dist_by_t;

    /// JSON-lines serialization, one record per iteration with fields
    /// {iter, loss_total, loss_norm_by_t, loss_dist_by_t, delta_linf}.
    std::string to_jsonl() const;
    void save_jsonl(const std::filesystem::path& path) const;
};

struct ImmunizeResult {
    ImageBuffer image;
    OptimizationTrace trace;
};

/// Runs the dual-objective PGD loop: pre-computes the original features once,
/// accumulates per-timestep gradients, averages over the timestep set, steps
/// against the sign, and re-clamps the image each iteration. The returned
/// perturbation satisfies |delta|_inf <= epsilon and the image stays in
/// [0, 1] at every iterate.
ImmunizeResult immunize(const ImageBuffer& x_orig, const EditPrompt& c,
                        const EditingBackend& backend, const SifmConfig& config);

}  // namespace immunize
