#include "immunize/sifm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "immunize/wire.hpp"

namespace immunize {

void SifmConfig::validate() const {
    if (epsilon <= 0.0) throw ConfigError("sifm: epsilon must be positive");
    if (alpha <= 0.0) throw ConfigError("sifm: alpha must be positive");
    if (iterations < 0) throw ConfigError("sifm: iterations must be non-negative");
    if (lambda < 0.0) throw ConfigError("sifm: lambda must be non-negative");
    if (timesteps.size() == 0) throw ConfigError("sifm: timestep set must be non-empty");
    if (!use_norm && !use_dist) {
        throw ConfigError("sifm: at least one objective component must be enabled");
    }
}

double loss_dist(const FeatureTensor& phi_imu, const FeatureTensor& phi_orig,
                 DistanceKind kind) {
    if (!phi_imu.values.same_shape(phi_orig.values)) {
        throw ShapeError("loss_dist: feature tensor shapes differ");
    }
    double acc = 0.0;
    const auto& a = phi_imu.values.data;
    const auto& b = phi_orig.values.data;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    if (kind == DistanceKind::MeanSquaredError) {
        acc /= static_cast<double>(a.size());
    }
    return acc;
}

double loss_norm(const FeatureTensor& phi_imu) {
    double acc = 0.0;
    for (double v : phi_imu.values.data) acc += std::abs(v);
    return acc;
}

double loss_sifm_t(const FeatureTensor& phi_imu, const FeatureTensor& phi_orig, double lambda,
                   DistanceKind kind) {
    if (lambda < 0.0) throw ConfigError("loss_sifm_t: lambda must be non-negative");
    return loss_norm(phi_imu) - lambda * loss_dist(phi_imu, phi_orig, kind);
}

double loss_total(std::span<const double> per_timestep_losses) {
    if (per_timestep_losses.empty()) {
        throw ConfigError("loss_total: need at least one per-timestep loss");
    }
    double acc = 0.0;
    for (double v : per_timestep_losses) acc += v;
    return acc / static_cast<double>(per_timestep_losses.size());
}

Perturbation pgd_step(const Perturbation& delta, const Tensor& gradient, double alpha,
                      double epsilon) {
    if (gradient.size() != static_cast<std::int64_t>(delta.size())) {
        throw ShapeError("pgd_step: gradient and perturbation sizes differ");
    }
    if (epsilon <= 0.0) throw ConfigError("pgd_step: epsilon must be positive");
    std::vector<double> out(delta.size());
    const auto& dv = delta.data();
    const auto& gv = gradient.data;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double sign = gv[i] > 0.0 ? 1.0 : (gv[i] < 0.0 ? -1.0 : 0.0);
        out[i] = std::clamp(dv[i] - alpha * sign, -epsilon, epsilon);
    }
    return Perturbation(delta.height(), delta.width(), std::move(out), epsilon);
}

SifmLoss::SifmLoss(Tensor reference, double lambda, DistanceKind kind, bool use_norm,
                   bool use_dist)
    : reference_(std::move(reference)),
      lambda_(lambda),
      kind_(kind),
      use_norm_(use_norm),
      use_dist_(use_dist) {
    if (lambda_ < 0.0) throw ConfigError("SifmLoss: lambda must be non-negative");
}

double SifmLoss::value(const Tensor& phi) const {
    if (!phi.same_shape(reference_)) {
        throw ShapeError("SifmLoss: feature shape differs from the reference");
    }
    double norm_term = 0.0;
    double dist_term = 0.0;
    for (std::size_t i = 0; i < phi.data.size(); ++i) {
        norm_term += std::abs(phi.data[i]);
        const double d = phi.data[i] - reference_.data[i];
        dist_term += d * d;
    }
    if (kind_ == DistanceKind::MeanSquaredError) {
        dist_term /= static_cast<double>(phi.data.size());
    }
    return (use_norm_ ? norm_term : 0.0) - (use_dist_ ? lambda_ * dist_term : 0.0);
}

Tensor SifmLoss::gradient(const Tensor& phi) const {
    if (!phi.same_shape(reference_)) {
        throw ShapeError("SifmLoss: feature shape differs from the reference");
    }
    Tensor g = Tensor::zeros(phi.shape);
    const double dist_scale =
        kind_ == DistanceKind::MeanSquaredError ? 2.0 / static_cast<double>(phi.data.size()) : 2.0;
    for (std::size_t i = 0; i < phi.data.size(); ++i) {
        double grad = 0.0;
        if (use_norm_) {
            grad += phi.data[i] > 0.0 ? 1.0 : (phi.data[i] < 0.0 ? -1.0 : 0.0);
        }
        if (use_dist_) {
            grad -= lambda_ * dist_scale * (phi.data[i] - reference_.data[i]);
        }
        g.data[i] = grad;
    }
    return g;
}

std::string SifmLoss::wire_spec() const {
    nlohmann::json spec;
    spec["kind"] = "sifm";
    spec["lambda"] = lambda_;
    spec["distance"] = kind_ == DistanceKind::MeanSquaredError ? "mse" : "sse";
    spec["use_norm"] = use_norm_;
    spec["use_dist"] = use_dist_;
    spec["reference"] = tensor_to_wire(reference_);
    return spec.dump();
}

namespace {

nlohmann::json losses_by_t_json(const std::map<int, double>& by_t) {
    nlohmann::json obj = nlohmann::json::object();
    for (const auto& [t, v] : by_t) obj[std::to_string(t)] = v;
    return obj;
}

}  // namespace

std::string OptimizationTrace::to_jsonl() const {
    std::string out;
    for (const TraceRecord& rec : records) {
        nlohmann::json line;
        line["iter"] = rec.iter;
        line["loss_total"] = rec.loss_total;
        line["loss_norm_by_t"] = losses_by_t_json(rec.loss_norm_by_t);
        line["loss_dist_by_t"] = losses_by_t_json(rec.loss_dist_by_t);
        line["delta_linf"] = rec.delta_linf;
        out += line.dump();
        out += '\n';
    }
    return out;
}

void OptimizationTrace::save_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::string body = to_jsonl();
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("short write to " + path.string());
}

ImmunizeResult immunize(const ImageBuffer& x_orig, const EditPrompt& c,
                        const EditingBackend& backend, const SifmConfig& config) {
    config.validate();
    c.validate();
    if (!backend.supports_gradients()) {
        throw CapabilityError("immunize requires a backend with gradient support");
    }
    const auto& timesteps = config.timesteps.values();

    // Pre-compute the original feature trajectory once; the fixed per-(seed,
    // timestep) noise draw keeps it comparable across iterations.
    std::vector<FeatureTensor> phi_orig;
    phi_orig.reserve(timesteps.size());
    for (int t : timesteps) {
        phi_orig.push_back(backend.aggregate_features(x_orig, c, t));
    }

    std::vector<SifmLoss> losses;
    losses.reserve(timesteps.size());
    for (const FeatureTensor& ref : phi_orig) {
        losses.emplace_back(ref.values, config.lambda, config.distance, config.use_norm,
                            config.use_dist);
    }

    OptimizationTrace trace;
    Perturbation delta = Perturbation::zeros(x_orig.height(), x_orig.width(), config.epsilon);
    ImageBuffer x_imu = apply_perturbation(x_orig, delta);

    auto eval_losses = [&](const ImageBuffer& img, double& total, std::map<int, double>& norms,
                           std::map<int, double>& dists) {
        std::vector<double> per_t;
        per_t.reserve(timesteps.size());
        for (std::size_t k = 0; k < timesteps.size(); ++k) {
            const FeatureTensor phi = backend.aggregate_features(img, c, timesteps[k]);
            const double n = loss_norm(phi);
            const double d = loss_dist(phi, phi_orig[k], config.distance);
            norms[timesteps[k]] = n;
            dists[timesteps[k]] = d;
            per_t.push_back((config.use_norm ? n : 0.0) -
                            (config.use_dist ? config.lambda * d : 0.0));
        }
        total = loss_total(per_t);
    };

    std::vector<TimestepLoss> items;
    items.reserve(timesteps.size());
    for (std::size_t k = 0; k < timesteps.size(); ++k) {
        items.push_back(TimestepLoss{timesteps[k], &losses[k]});
    }

    for (int n = 1; n <= config.iterations; ++n) {
        TraceRecord rec;
        rec.iter = n;
        eval_losses(x_imu, rec.loss_total, rec.loss_norm_by_t, rec.loss_dist_by_t);

        // g_total accumulates the per-timestep gradients, then averages.
        Tensor g_total = backend.loss_gradient(x_imu, c, items);
        const double inv_count = 1.0 / static_cast<double>(timesteps.size());
        for (double& v : g_total.data) v *= inv_count;

        delta = pgd_step(delta, g_total, config.alpha, config.epsilon);
        x_imu = apply_perturbation(x_orig, delta);

        rec.delta_linf = delta.linf_norm();
        const auto [mn, mx] = std::minmax_element(x_imu.data().begin(), x_imu.data().end());
        rec.x_min = *mn;
        rec.x_max = *mx;
        trace.records.push_back(std::move(rec));
    }

    eval_losses(x_imu, trace.final_loss_total, trace.final_loss_norm_by_t,
                trace.final_loss_dist_by_t);
    trace.final_perturbation = delta;
    return ImmunizeResult{std::move(x_imu), std::move(trace)};
}

}  // namespace immunize
