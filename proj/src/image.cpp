#include "immunize/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace immunize {

namespace {

void check_positive_dims(int height, int width) {
    if (height <= 0 || width <= 0) {
        throw ShapeError("image dimensions must be positive");
    }
}

}  // namespace

ImageBuffer::ImageBuffer(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
    check_positive_dims(height, width);
    const std::size_t expected = static_cast<std::size_t>(height) * width * 3;
    if (data_.size() != expected) {
        throw ShapeError("image data length does not match height*width*3");
    }
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ShapeError("image intensities must lie in [0, 1]");
        }
    }
}

ImageBuffer ImageBuffer::filled(int height, int width, double value) {
    check_positive_dims(height, width);
    return ImageBuffer(height, width,
                       std::vector<double>(static_cast<std::size_t>(height) * width * 3, value));
}

std::vector<std::uint8_t> ImageBuffer::content_bytes() const {
    std::vector<std::uint8_t> out(data_.size() * sizeof(double) + 2 * sizeof(std::int32_t));
    std::int32_t h = height_, w = width_;
    std::memcpy(out.data(), &h, sizeof(h));
    std::memcpy(out.data() + sizeof(h), &w, sizeof(w));
    std::memcpy(out.data() + 2 * sizeof(h), data_.data(), data_.size() * sizeof(double));
    return out;
}

Perturbation::Perturbation(int height, int width, std::vector<double> data, double epsilon)
    : height_(height), width_(width), epsilon_(epsilon), data_(std::move(data)) {
    check_positive_dims(height, width);
    if (epsilon <= 0.0) {
        throw ConfigError("perturbation epsilon must be positive");
    }
    const std::size_t expected = static_cast<std::size_t>(height) * width * 3;
    if (data_.size() != expected) {
        throw ShapeError("perturbation data length does not match height*width*3");
    }
    for (double v : data_) {
        if (!(std::abs(v) <= epsilon_)) {
            throw ShapeError("perturbation element exceeds the epsilon budget");
        }
    }
}

Perturbation Perturbation::zeros(int height, int width, double epsilon) {
    check_positive_dims(height, width);
    return Perturbation(height, width,
                        std::vector<double>(static_cast<std::size_t>(height) * width * 3, 0.0),
                        epsilon);
}

double Perturbation::linf_norm() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

ImageBuffer apply_perturbation(const ImageBuffer& x, const Perturbation& delta) {
    if (x.height() != delta.height() || x.width() != delta.width()) {
        throw ShapeError("apply_perturbation: image and perturbation shapes differ");
    }
    std::vector<double> out(x.size());
    const auto& xv = x.data();
    const auto& dv = delta.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(xv[i] + dv[i], 0.0, 1.0);
    }
    return ImageBuffer(x.height(), x.width(), std::move(out));
}

Perturbation linf_project(const Perturbation& delta, double epsilon) {
    if (epsilon <= 0.0) {
        throw ConfigError("linf_project: epsilon must be positive");
    }
    std::vector<double> out(delta.size());
    const auto& dv = delta.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(dv[i], -epsilon, epsilon);
    }
    return Perturbation(delta.height(), delta.width(), std::move(out), epsilon);
}

}  // namespace immunize
