#pragma once

#include "immunize/backend.hpp"

namespace immunize {

/// Deterministic differentiable stand-in for a text-guided diffusion editor.
///
/// A 3-level convolutional encoder-decoder predicts noise over pixel-space
/// latents (the latent encoding is the identity). Weights are random but
/// fixed by seed; the prompt is hashed into a fixed-width embedding injected
/// additively at the bottleneck together with a per-timestep embedding. The
/// cumulative signal rate follows a linear schedule abar_t = 1 - t/len, so
/// t = 0 carries no noise.
///
/// Selectable intermediate layers, identified by name (channels in
/// parentheses): enc1 (8), enc2 (12), bottleneck (16), dec1 (16), dec2 (8),
/// head (3). Layers chosen for aggregation must share a channel count;
/// spatial mismatches are nearest-resampled to the smallest selected layer.
class ToyBackend : public EditingBackend {
public:
    static constexpr std::uint64_t kDefaultWeightSeed = 0x700BACC5ULL;

    /// Descriptor defaults: the two deepest decoder-side layers
    /// {bottleneck, dec1}, schedule length 10, noise seed 0.
    static BackendDescriptor default_descriptor(std::uint64_t noise_seed = 0);

    explicit ToyBackend(BackendDescriptor descriptor = default_descriptor(),
                        std::uint64_t weight_seed = kDefaultWeightSeed);

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    Tensor noisy_latent(const ImageBuffer& x, int t, std::uint64_t seed) const override;
    FeatureTensor aggregate_features(const ImageBuffer& x, const EditPrompt& c,
                                     int t) const override;
    Tensor loss_gradient(const ImageBuffer& x, const EditPrompt& c,
                         std::span<const TimestepLoss> losses) const override;
    ImageBuffer edit(const ImageBuffer& x, const EditPrompt& c,
                     std::uint64_t sampler_seed) const override;

    /// Signal rate abar_t of the linear schedule; t must be within range.
    double alpha_bar(int t) const;

    /// Output of a single named layer; test oracles average these externally
    /// to cross-check aggregate_features.
    Tensor layer_output(const ImageBuffer& x, const EditPrompt& c, int t,
                        const std::string& layer) const;

    static const std::vector<std::string>& known_layers();

private:
    struct Conv {
        int in_ch = 0;
        int out_ch = 0;
        std::vector<double> weights;  // [out][in][3][3]
        std::vector<double> bias;     // [out]
    };

    struct Forward;  // full activation cache, defined in the .cpp

    void run_forward(const Tensor& z, const EditPrompt& c, int t, Forward& f) const;
    Tensor predict_noise(const Tensor& z, const EditPrompt& c, int t) const;
    std::vector<double> prompt_embedding(const EditPrompt& c) const;
    std::vector<double> time_embedding(int t) const;
    void check_timestep(int t) const;
    FeatureTensor aggregate_from_forward(const Forward& f, int t) const;

    BackendDescriptor descriptor_;
    Conv enc1_, enc2_, mid_, dec1_, dec2_, head_;
};

}  // namespace immunize
