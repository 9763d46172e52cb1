#include "immunize/backend.hpp"

#include <algorithm>
#include <sstream>

namespace immunize {

void EditPrompt::validate() const {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        throw ConfigError("edit prompt text must be non-empty");
    }
}

TimestepSet::TimestepSet(std::vector<int> timesteps) : values_(std::move(timesteps)) {
    if (values_.empty()) {
        throw ConfigError("timestep set must be non-empty");
    }
    std::sort(values_.begin(), values_.end());
    values_.erase(std::unique(values_.begin(), values_.end()), values_.end());
}

void BackendDescriptor::validate() const {
    if (name.empty()) throw ConfigError("backend descriptor needs a name");
    if (layer_selection.empty()) {
        throw ConfigError("backend descriptor needs at least one targeted layer");
    }
    if (schedule_length < 2) {
        throw ConfigError("backend schedule length must be at least 2");
    }
}

std::string BackendDescriptor::fingerprint() const {
    std::ostringstream out;
    out << name << "|len=" << schedule_length << "|seed=" << noise_seed << "|layers=";
    for (const auto& layer : layer_selection) out << layer << ',';
    return out.str();
}

std::pair<int, int> aggregation_target_shape(std::span<const Tensor* const> layers) {
    if (layers.empty()) {
        throw ConfigError("feature aggregation needs at least one layer");
    }
    const Tensor* smallest = layers.front();
    for (const Tensor* layer : layers) {
        if (static_cast<std::int64_t>(layer->shape[1]) * layer->shape[2] <
            static_cast<std::int64_t>(smallest->shape[1]) * smallest->shape[2]) {
            smallest = layer;
        }
    }
    return {smallest->shape[1], smallest->shape[2]};
}

FeatureTensor aggregate_layer_outputs(std::span<const Tensor* const> layers, int timestep) {
    const auto [th, tw] = aggregation_target_shape(layers);
    const int channels = layers.front()->shape[0];
    Tensor acc = Tensor::zeros({channels, th, tw});
    for (const Tensor* layer : layers) {
        if (layer->shape[0] != channels) {
            throw ShapeError(
                "selected layers disagree on channel count; pick layers of matching width");
        }
        const Tensor resized = nearest_resize(*layer, th, tw);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += resized.data[i];
    }
    const double inv_m = 1.0 / static_cast<double>(layers.size());
    for (double& v : acc.data) v *= inv_m;
    return FeatureTensor{timestep, std::move(acc)};
}

}  // namespace immunize
