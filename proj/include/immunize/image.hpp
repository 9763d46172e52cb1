#pragma once

#include <cstdint>
#include <vector>

#include "immunize/errors.hpp"

namespace immunize {

/// H x W x 3 array of pixel intensities in [0, 1], row-major (HWC).
///
/// Intensities are stored as 64-bit reals; quantization to 8 bits happens
/// only when an image is written to disk. Instances are immutable after
/// construction and safe to share across threads.
class ImageBuffer {
public:
    ImageBuffer(int height, int width, std::vector<double> data);

    /// Constant-intensity image, handy for fixtures.
    static ImageBuffer filled(int height, int width, double value);

    int height() const { return height_; }
    int width() const { return width_; }
    static constexpr int channels() { return 3; }
    std::size_t size() const { return data_.size(); }

    const std::vector<double>& data() const { return data_; }

    double at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
    }

    bool same_shape(const ImageBuffer& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    /// Raw little-endian bytes of the intensity array; used for content
    /// hashing in caches.
    std::vector<std::uint8_t> content_bytes() const;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// Additive perturbation delta with an L-infinity budget epsilon. Shape
/// matches the image it protects; every element lies in [-epsilon, epsilon].
class Perturbation {
public:
    Perturbation(int height, int width, std::vector<double> data, double epsilon);

    /// delta = 0 everywhere.
    static Perturbation zeros(int height, int width, double epsilon);

    int height() const { return height_; }
    int width() const { return width_; }
    double epsilon() const { return epsilon_; }
    std::size_t size() const { return data_.size(); }
    const std::vector<double>& data() const { return data_; }

    /// max |delta_i|.
    double linf_norm() const;

private:
    int height_ = 0;
    int width_ = 0;
    double epsilon_ = 0.0;
    std::vector<double> data_;
};

/// Element-wise x + delta clamped back to [0, 1].
ImageBuffer apply_perturbation(const ImageBuffer& x, const Perturbation& delta);

/// Clamp every element of delta to [-epsilon, epsilon]. Idempotent; never
/// increases any |delta_i|.
Perturbation linf_project(const Perturbation& delta, double epsilon);

}  // namespace immunize
