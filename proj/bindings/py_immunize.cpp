// Python bindings for the core operations: perturbation arithmetic, the toy
// editing backend, the dual-objective optimizer, metrics and ISR evaluation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "immunize/image.hpp"
#include "immunize/image_io.hpp"
#include "immunize/isr.hpp"
#include "immunize/metrics.hpp"
#include "immunize/sifm.hpp"
#include "immunize/toy_backend.hpp"

namespace py = pybind11;
using namespace immunize;

namespace {

ImageBuffer image_from_array(const py::array_t<double, py::array::c_style>& array) {
    if (array.ndim() != 3 || array.shape(2) != 3) {
        throw ShapeError("expected an (H, W, 3) float64 array");
    }
    const auto h = static_cast<int>(array.shape(0));
    const auto w = static_cast<int>(array.shape(1));
    const double* ptr = array.data();
    return ImageBuffer(h, w, std::vector<double>(ptr, ptr + array.size()));
}

py::array_t<double> image_to_array(const ImageBuffer& image) {
    py::array_t<double> out({image.height(), image.width(), 3});
    std::copy(image.data().begin(), image.data().end(), out.mutable_data());
    return out;
}

Tensor tensor_from_array(const py::array_t<double, py::array::c_style>& array) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < array.ndim(); ++i) {
        shape.push_back(static_cast<int>(array.shape(i)));
    }
    const double* ptr = array.data();
    return Tensor(std::move(shape), std::vector<double>(ptr, ptr + array.size()));
}

py::array_t<double> tensor_to_array(const Tensor& tensor) {
    std::vector<py::ssize_t> shape(tensor.shape.begin(), tensor.shape.end());
    py::array_t<double> out(shape);
    std::copy(tensor.data.begin(), tensor.data.end(), out.mutable_data());
    return out;
}

DistanceKind distance_from_name(const std::string& name) {
    if (name == "mse") return DistanceKind::MeanSquaredError;
    if (name == "sse") return DistanceKind::SumSquaredError;
    throw ConfigError("distance must be 'mse' or 'sse'");
}

EditPrompt make_prompt(const std::string& text, const std::map<std::string, double>& guidance) {
    EditPrompt prompt{text, guidance};
    prompt.validate();
    return prompt;
}

py::dict verdict_to_dict(const JudgeVerdict& v) {
    py::dict out;
    out["judge_id"] = v.judge_id;
    out["valid"] = v.valid;
    out["semantic_mismatch"] = v.semantic_mismatch;
    out["quality_degradation"] = v.perceptual_degradation;
    out["success"] = v.success;
    out["raw_response"] = v.raw_response;
    return out;
}

JudgeVerdict verdict_from_dict(const py::dict& d) {
    JudgeVerdict v;
    v.judge_id = d.contains("judge_id") ? d["judge_id"].cast<std::string>() : "";
    v.valid = d.contains("valid") ? d["valid"].cast<bool>() : true;
    v.semantic_mismatch =
        d.contains("semantic_mismatch") ? d["semantic_mismatch"].cast<bool>() : false;
    v.perceptual_degradation =
        d.contains("quality_degradation") ? d["quality_degradation"].cast<bool>() : false;
    v.success = v.semantic_mismatch || v.perceptual_degradation;
    return v;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Image immunization toolkit: perturbation generation against text-guided "
              "diffusion editing, plus metrics and judge-based success evaluation";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<IoError>(m, "IoError");
    py::register_exception<CapabilityError>(m, "CapabilityError");

    m.def(
        "apply_perturbation",
        [](const py::array_t<double, py::array::c_style>& x,
           const py::array_t<double, py::array::c_style>& delta, double epsilon) {
            const ImageBuffer image = image_from_array(x);
            const Tensor d = tensor_from_array(delta);
            const ImageBuffer out = apply_perturbation(
                image, Perturbation(image.height(), image.width(), d.data, epsilon));
            return image_to_array(out);
        },
        py::arg("x"), py::arg("delta"), py::arg("epsilon") = 0.03,
        "Element-wise x + delta clamped to [0, 1]");

    m.def(
        "linf_project",
        [](const py::array_t<double, py::array::c_style>& delta, double epsilon,
           double budget) {
            const Tensor d = tensor_from_array(delta);
            if (d.shape.size() != 3 || d.shape[2] != 3) {
                throw ShapeError("expected an (H, W, 3) float64 array");
            }
            const Perturbation p(d.shape[0], d.shape[1], d.data, budget);
            return tensor_to_array(
                Tensor(d.shape, linf_project(p, epsilon).data()));
        },
        py::arg("delta"), py::arg("epsilon"), py::arg("budget") = 1.0,
        "Clamp every element of delta to [-epsilon, epsilon]");

    m.def(
        "load_image",
        [](const std::string& path) { return image_to_array(load_image(path)); },
        py::arg("path"), "Read an 8-bit PNG or JPEG into an (H, W, 3) array of v/255");
    m.def(
        "save_image",
        [](const py::array_t<double, py::array::c_style>& x, const std::string& path) {
            save_image(image_from_array(x), path);
        },
        py::arg("x"), py::arg("path"), "Write an (H, W, 3) array as an 8-bit PNG");

    m.def(
        "psnr",
        [](const py::array_t<double, py::array::c_style>& a,
           const py::array_t<double, py::array::c_style>& b) {
            return psnr(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"), "Peak signal-to-noise ratio in dB, capped at 100");
    m.def(
        "ssim",
        [](const py::array_t<double, py::array::c_style>& a,
           const py::array_t<double, py::array::c_style>& b) {
            return ssim(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"), "Mean structural similarity (11x11 Gaussian windows)");

    m.def(
        "loss_dist",
        [](const py::array_t<double, py::array::c_style>& phi_imu,
           const py::array_t<double, py::array::c_style>& phi_orig, const std::string& kind) {
            return loss_dist(FeatureTensor{0, tensor_from_array(phi_imu)},
                             FeatureTensor{0, tensor_from_array(phi_orig)},
                             distance_from_name(kind));
        },
        py::arg("phi_imu"), py::arg("phi_orig"), py::arg("kind") = "mse",
        "Feature distance (mean or sum of squared differences)");
    m.def(
        "loss_norm",
        [](const py::array_t<double, py::array::c_style>& phi) {
            return loss_norm(FeatureTensor{0, tensor_from_array(phi)});
        },
        py::arg("phi"), "Entry-wise L1 norm of a feature tensor");
    m.def(
        "loss_sifm_t",
        [](const py::array_t<double, py::array::c_style>& phi_imu,
           const py::array_t<double, py::array::c_style>& phi_orig, double lambda_,
           const std::string& kind) {
            return loss_sifm_t(FeatureTensor{0, tensor_from_array(phi_imu)},
                               FeatureTensor{0, tensor_from_array(phi_orig)}, lambda_,
                               distance_from_name(kind));
        },
        py::arg("phi_imu"), py::arg("phi_orig"), py::arg("lambda_") = 0.1,
        py::arg("kind") = "mse", "Per-timestep objective: L1 norm minus lambda * distance");
    m.def(
        "pgd_step",
        [](const py::array_t<double, py::array::c_style>& delta,
           const py::array_t<double, py::array::c_style>& gradient, double alpha,
           double epsilon) {
            const Tensor d = tensor_from_array(delta);
            if (d.shape.size() != 3 || d.shape[2] != 3) {
                throw ShapeError("expected an (H, W, 3) float64 array");
            }
            const Perturbation p(d.shape[0], d.shape[1], d.data, std::max(epsilon, 1.0));
            const Perturbation next = pgd_step(p, tensor_from_array(gradient), alpha, epsilon);
            return tensor_to_array(Tensor(d.shape, next.data()));
        },
        py::arg("delta"), py::arg("gradient"), py::arg("alpha") = 0.005,
        py::arg("epsilon") = 0.03,
        "Signed-gradient descent step followed by projection onto the epsilon ball");

    py::class_<ToyBackend>(m, "ToyBackend",
                           "Deterministic differentiable stand-in editor with named "
                           "intermediate layers")
        .def(py::init([](std::vector<std::string> layers, int schedule_length,
                         std::uint64_t noise_seed, std::uint64_t weight_seed) {
                 BackendDescriptor desc = ToyBackend::default_descriptor(noise_seed);
                 if (!layers.empty()) desc.layer_selection = std::move(layers);
                 desc.schedule_length = schedule_length;
                 return ToyBackend(desc, weight_seed);
             }),
             py::arg("layers") = std::vector<std::string>{},
             py::arg("schedule_length") = 10, py::arg("noise_seed") = 0,
             py::arg("weight_seed") = ToyBackend::kDefaultWeightSeed)
        .def_property_readonly("layers",
                               [](const ToyBackend& b) { return b.descriptor().layer_selection; })
        .def_property_readonly("schedule_length",
                               [](const ToyBackend& b) { return b.descriptor().schedule_length; })
        .def("alpha_bar", &ToyBackend::alpha_bar, py::arg("t"))
        .def(
            "noisy_latent",
            [](const ToyBackend& b, const py::array_t<double, py::array::c_style>& x, int t,
               std::uint64_t seed) {
                return tensor_to_array(b.noisy_latent(image_from_array(x), t, seed));
            },
            py::arg("x"), py::arg("t"), py::arg("seed") = 0)
        .def(
            "features",
            [](const ToyBackend& b, const py::array_t<double, py::array::c_style>& x,
               const std::string& prompt, int t, const std::map<std::string, double>& guidance) {
                return tensor_to_array(
                    b.aggregate_features(image_from_array(x), make_prompt(prompt, guidance), t)
                        .values);
            },
            py::arg("x"), py::arg("prompt"), py::arg("t"),
            py::arg("guidance") = std::map<std::string, double>{})
        .def(
            "layer_output",
            [](const ToyBackend& b, const py::array_t<double, py::array::c_style>& x,
               const std::string& prompt, int t, const std::string& layer) {
                return tensor_to_array(
                    b.layer_output(image_from_array(x), make_prompt(prompt, {}), t, layer));
            },
            py::arg("x"), py::arg("prompt"), py::arg("t"), py::arg("layer"))
        .def(
            "edit",
            [](const ToyBackend& b, const py::array_t<double, py::array::c_style>& x,
               const std::string& prompt, std::uint64_t seed,
               const std::map<std::string, double>& guidance) {
                return image_to_array(b.edit(image_from_array(x), make_prompt(prompt, guidance),
                                             seed));
            },
            py::arg("x"), py::arg("prompt"), py::arg("seed") = 0,
            py::arg("guidance") = std::map<std::string, double>{});

    m.def(
        "immunize",
        [](const py::array_t<double, py::array::c_style>& x, const std::string& prompt,
           const ToyBackend& backend, double epsilon, double alpha, int iterations,
           double lambda_, std::vector<int> timesteps, const std::string& distance,
           std::uint64_t seed, bool use_norm, bool use_dist) {
            SifmConfig config;
            config.epsilon = epsilon;
            config.alpha = alpha;
            config.iterations = iterations;
            config.lambda = lambda_;
            config.timesteps = TimestepSet(std::move(timesteps));
            config.distance = distance_from_name(distance);
            config.seed = seed;
            config.use_norm = use_norm;
            config.use_dist = use_dist;
            const ImmunizeResult result =
                immunize::immunize(image_from_array(x), make_prompt(prompt, {}), backend, config);

            py::list trace;
            for (const TraceRecord& rec : result.trace.records) {
                py::dict row;
                row["iter"] = rec.iter;
                row["loss_total"] = rec.loss_total;
                row["loss_norm_by_t"] = rec.loss_norm_by_t;
                row["loss_dist_by_t"] = rec.loss_dist_by_t;
                row["delta_linf"] = rec.delta_linf;
                trace.append(std::move(row));
            }
            py::dict summary;
            summary["final_loss_total"] = result.trace.final_loss_total;
            summary["records"] = std::move(trace);
            return py::make_tuple(image_to_array(result.image), summary);
        },
        py::arg("x"), py::arg("prompt"), py::arg("backend"), py::arg("epsilon") = 0.03,
        py::arg("alpha") = 0.005, py::arg("iterations") = 100, py::arg("lambda_") = 0.1,
        py::arg("timesteps") = std::vector<int>{2, 5, 8}, py::arg("distance") = "mse",
        py::arg("seed") = 0, py::arg("use_norm") = true, py::arg("use_dist") = true,
        "Run the dual-objective PGD loop; returns (immunized image, trace dict)");

    m.def(
        "build_judge_prompt",
        [](const std::string& original_ref, const std::string& edited_ref,
           const std::string& prompt) {
            return build_judge_prompt(original_ref, edited_ref, make_prompt(prompt, {}));
        },
        py::arg("original_ref") = "original", py::arg("edited_immunized_ref") = "edited",
        py::arg("prompt") = "",
        "Deterministic judge instruction with the two-question answer schema");
    m.def(
        "parse_verdict",
        [](const std::string& raw, const std::string& judge_id) {
            return verdict_to_dict(parse_verdict(raw, judge_id));
        },
        py::arg("raw_response"), py::arg("judge_id") = "judge");
    m.def(
        "aggregate_strict",
        [](const py::list& verdicts) {
            std::vector<JudgeVerdict> parsed;
            for (const auto& item : verdicts) {
                parsed.push_back(verdict_from_dict(item.cast<py::dict>()));
            }
            return aggregate_strict(parsed);
        },
        py::arg("verdicts"),
        "True iff every valid verdict reports success; needs >= 2 valid verdicts");
    m.def(
        "compute_isr",
        [](const py::list& records) {
            std::vector<EvaluationRecord> parsed;
            for (const auto& item : records) {
                const py::dict d = item.cast<py::dict>();
                EvaluationRecord rec;
                rec.final_success = d.contains("success") ? d["success"].cast<bool>() : false;
                rec.prompt_mode =
                    d.contains("prompt_mode") ? d["prompt_mode"].cast<std::string>() : "original";
                rec.category = d.contains("category") ? d["category"].cast<std::string>() : "";
                rec.excluded = d.contains("excluded") ? d["excluded"].cast<bool>() : false;
                parsed.push_back(std::move(rec));
            }
            const IsrSummary summary = compute_isr(parsed);
            py::dict out;
            out["n_success"] = summary.n_success;
            out["n_total"] = summary.n_total;
            out["n_excluded"] = summary.n_excluded;
            out["isr"] = summary.isr;
            py::dict by_mode;
            for (const auto& [mode, cell] : summary.by_prompt_mode) {
                by_mode[py::str(mode)] =
                    py::make_tuple(cell.n_success, cell.n_total, cell.isr());
            }
            out["by_prompt_mode"] = std::move(by_mode);
            py::dict by_category;
            for (const auto& [category, cell] : summary.by_category) {
                by_category[py::str(category)] =
                    py::make_tuple(cell.n_success, cell.n_total, cell.isr());
            }
            out["by_category"] = std::move(by_category);
            return out;
        },
        py::arg("records"),
        "Immunization success rate over record dicts with success/prompt_mode/category keys");

    m.attr("__version__") = "0.1.0";
}
