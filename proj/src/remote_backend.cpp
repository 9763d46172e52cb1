#include "immunize/remote_backend.hpp"

#include <chrono>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "immunize/wire.hpp"

namespace immunize {

struct RemoteBackend::Impl {
    Impl(const std::string& base_url, int max_in_flight)
        : client(base_url), in_flight(max_in_flight) {
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
    }
    httplib::Client client;
    std::counting_semaphore<256> in_flight;
};

RemoteBackend::RemoteBackend(RemoteBackendConfig config, BackendDescriptor descriptor)
    : config_(std::move(config)), descriptor_(std::move(descriptor)) {
    descriptor_.validate();
    if (config_.base_url.empty()) throw ConfigError("remote backend needs a base URL");
    if (config_.max_in_flight < 1 || config_.max_in_flight > 256) {
        throw ConfigError("remote backend in-flight limit must be in [1, 256]");
    }
    impl_ = std::make_unique<Impl>(config_.base_url, config_.max_in_flight);
}

RemoteBackend::~RemoteBackend() = default;

namespace {

nlohmann::json post_json(httplib::Client& client, std::counting_semaphore<256>& in_flight,
                         const std::string& path, const nlohmann::json& body, int max_attempts,
                         int backoff_base_ms) {
    std::string last_error;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        in_flight.acquire();
        auto res = client.Post(path, body.dump(), "application/json");
        in_flight.release();
        if (res && res->status == 200) {
            nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
            if (!reply.is_discarded()) return reply;
            last_error = path + ": malformed JSON response";
        } else if (res && res->status == 501) {
            throw CapabilityError("remote adapter does not implement " + path);
        } else if (res) {
            last_error = path + ": status " + std::to_string(res->status);
        } else {
            last_error = path + ": transport failure";
        }
        if (attempt < max_attempts) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_base_ms * (1 << (attempt - 1))));
        }
    }
    throw BackendError("remote backend: " + last_error + " after " +
                           std::to_string(max_attempts) + " attempts",
                       max_attempts);
}

}  // namespace

Tensor RemoteBackend::noisy_latent(const ImageBuffer&, int, std::uint64_t) const {
    throw CapabilityError("remote adapters do not expose raw latents");
}

FeatureTensor RemoteBackend::aggregate_features(const ImageBuffer& x, const EditPrompt& c,
                                                int t) const {
    nlohmann::json body;
    body["image"] = image_to_wire(x);
    body["prompt"] = prompt_to_wire(c);
    body["timesteps"] = std::vector<int>{t};
    const auto reply = post_json(impl_->client, impl_->in_flight, "/features", body,
                                 config_.max_attempts, config_.backoff_base_ms);
    if (!reply.contains("features") || !reply["features"].is_array() ||
        reply["features"].empty()) {
        throw BackendError("remote backend: /features reply missing feature list",
                           config_.max_attempts);
    }
    const auto& entry = reply["features"][0];
    FeatureTensor feature;
    feature.timestep = entry.value("timestep", t);
    feature.values = tensor_from_wire(entry);
    return feature;
}

Tensor RemoteBackend::loss_gradient(const ImageBuffer& x, const EditPrompt& c,
                                    std::span<const TimestepLoss> losses) const {
    nlohmann::json body;
    body["image"] = image_to_wire(x);
    body["prompt"] = prompt_to_wire(c);
    nlohmann::json items = nlohmann::json::array();
    for (const TimestepLoss& item : losses) {
        if (item.loss == nullptr) throw ConfigError("loss_gradient: null loss entry");
        const std::string spec = item.loss->wire_spec();
        if (spec.empty()) {
            throw CapabilityError(
                "this loss cannot be transported over the adapter wire protocol");
        }
        nlohmann::json entry;
        entry["timestep"] = item.timestep;
        entry["spec"] = nlohmann::json::parse(spec);
        items.push_back(std::move(entry));
    }
    body["losses"] = std::move(items);
    const auto reply = post_json(impl_->client, impl_->in_flight, "/grad", body,
                                 config_.max_attempts, config_.backoff_base_ms);
    if (!reply.contains("gradient")) {
        throw BackendError("remote backend: /grad reply missing gradient",
                           config_.max_attempts);
    }
    return tensor_from_wire(reply["gradient"]);
}

ImageBuffer RemoteBackend::edit(const ImageBuffer& x, const EditPrompt& c,
                                std::uint64_t sampler_seed) const {
    nlohmann::json body;
    body["image"] = image_to_wire(x);
    body["prompt"] = prompt_to_wire(c);
    body["seed"] = sampler_seed;
    const auto reply = post_json(impl_->client, impl_->in_flight, "/edit", body,
                                 config_.max_attempts, config_.backoff_base_ms);
    if (!reply.contains("image")) {
        throw BackendError("remote backend: /edit reply missing image", config_.max_attempts);
    }
    return image_from_wire(reply["image"]);
}

}  // namespace immunize
