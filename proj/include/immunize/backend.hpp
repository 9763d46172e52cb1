#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "immunize/image.hpp"
#include "immunize/tensor.hpp"

namespace immunize {

/// Text condition for an edit. Guidance parameters are backend-specific and
/// passed through opaquely.
struct EditPrompt {
    std::string text;
    std::map<std::string, double> guidance;

    void validate() const;
};

/// Ordered set of distinct diffusion timesteps. Construction normalizes
/// (sorts and deduplicates) the input.
class TimestepSet {
public:
    explicit TimestepSet(std::vector<int> timesteps);

    const std::vector<int>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<int> values_;
};

/// Aggregated intermediate representation at one diffusion timestep: the
/// mean of the backend's targeted layer outputs, spatially resampled to the
/// smallest selected layer's shape.
struct FeatureTensor {
    int timestep = 0;
    Tensor values;
};

/// The aggregation itself: (1/M) * sum of layer outputs after nearest
/// resampling to the smallest selected layer's spatial shape. Layers must
/// agree on channel count (the scheme defines only spatial resampling).
FeatureTensor aggregate_layer_outputs(std::span<const Tensor* const> layers, int timestep);

/// Spatial shape the aggregation resamples to.
std::pair<int, int> aggregation_target_shape(std::span<const Tensor* const> layers);

/// Identity and configuration of an editing backend: which intermediate
/// layers feed the feature aggregate, the schedule length, and the seed of
/// the fixed forward-diffusion noise draw.
struct BackendDescriptor {
    std::string name;
    std::vector<std::string> layer_selection;
    int schedule_length = 10;
    std::uint64_t noise_seed = 0;

    void validate() const;
    /// Canonical string for cache keys.
    std::string fingerprint() const;
};

/// Differentiable scalar loss over one feature tensor. The gradient method
/// makes reverse-mode differentiation through a backend possible without the
/// backend knowing the loss; wire_spec() is the optional JSON form a remote
/// adapter can transport (empty string when the loss is local-only).
class FeatureLoss {
public:
    virtual ~FeatureLoss() = default;
    virtual double value(const Tensor& phi) const = 0;
    virtual Tensor gradient(const Tensor& phi) const = 0;
    virtual std::string wire_spec() const { return {}; }
};

/// One (timestep, loss) pair for gradient accumulation.
struct TimestepLoss {
    int timestep = 0;
    const FeatureLoss* loss = nullptr;
};

/// Abstraction over a text-guided diffusion editor: full edits, aggregated
/// intermediate features, and pixel gradients of feature losses. All
/// operations are pure functions of (inputs, seeds, descriptor); backends
/// are immutable after construction and callable concurrently.
class EditingBackend {
public:
    virtual ~EditingBackend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    /// Forward-diffusion latent sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eta,
    /// with eta drawn deterministically from (seed, t).
    virtual Tensor noisy_latent(const ImageBuffer& x, int t, std::uint64_t seed) const = 0;

    /// Mean of the targeted layer outputs at timestep t (descriptor noise
    /// seed fixes the stochastic part).
    virtual FeatureTensor aggregate_features(const ImageBuffer& x, const EditPrompt& c,
                                             int t) const = 0;

    /// d(sum of losses)/dx as an {H, W, 3} tensor. Throws CapabilityError
    /// when the backend cannot differentiate.
    virtual Tensor loss_gradient(const ImageBuffer& x, const EditPrompt& c,
                                 std::span<const TimestepLoss> losses) const = 0;

    /// Full deterministic sampling pass conditioned on the prompt.
    virtual ImageBuffer edit(const ImageBuffer& x, const EditPrompt& c,
                             std::uint64_t sampler_seed) const = 0;

    virtual bool supports_gradients() const { return true; }
};

}  // namespace immunize
