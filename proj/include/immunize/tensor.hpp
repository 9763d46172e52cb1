#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "immunize/errors.hpp"

namespace immunize {

/// Dense row-major multi-dimensional array of doubles. Small by design:
/// just enough for latents, layer activations and pixel gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != element_count(shape)) {
            throw ShapeError("tensor data length does not match its shape");
        }
    }

    static Tensor zeros(std::vector<int> s) {
        const auto n = element_count(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }

    static std::int64_t element_count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Channel-height-width accessors for the 3-d tensors used throughout the
    // toy backend.
    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
};

/// Nearest-neighbor spatial resampling of a {C, H, W} tensor (source index
/// floor(i * src / dst)), and its transpose (scatter-add), used both by the
/// feature aggregation and the toy network's upsampling path.
Tensor nearest_resize(const Tensor& in, int out_h, int out_w);
Tensor nearest_resize_backward(const Tensor& g_out, int in_h, int in_w);

}  // namespace immunize
