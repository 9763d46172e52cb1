#pragma once

#include <memory>

#include "immunize/backend.hpp"

namespace immunize {

struct RemoteBackendConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8790
    int max_attempts = 3;
    int backoff_base_ms = 100;
    int max_in_flight = 4;  // bound on concurrent requests
};

/// JSON-over-HTTP adapter for an out-of-process editor exposing the wire
/// protocol (POST /features, /grad, /edit). Requests are retried with
/// exponential backoff; exhausted retries raise BackendError with the
/// attempt count. A 501 from /grad maps to CapabilityError (edit-auto
/// adapters are allowed to refuse differentiation). Only losses that
/// provide a wire_spec() (the SIFM family) can be differentiated remotely.
///
/// noisy_latent is intentionally unsupported: the wire protocol does not
/// expose raw latents, so the call raises CapabilityError.
class RemoteBackend : public EditingBackend {
public:
    RemoteBackend(RemoteBackendConfig config, BackendDescriptor descriptor);
    ~RemoteBackend() override;

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    Tensor noisy_latent(const ImageBuffer& x, int t, std::uint64_t seed) const override;
    FeatureTensor aggregate_features(const ImageBuffer& x, const EditPrompt& c,
                                     int t) const override;
    Tensor loss_gradient(const ImageBuffer& x, const EditPrompt& c,
                         std::span<const TimestepLoss> losses) const override;
    ImageBuffer edit(const ImageBuffer& x, const EditPrompt& c,
                     std::uint64_t sampler_seed) const override;

private:
    RemoteBackendConfig config_;
    BackendDescriptor descriptor_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace immunize
