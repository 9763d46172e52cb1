#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>

#include "immunize/image.hpp"
#include "immunize/rng.hpp"
#include "immunize/tensor.hpp"
#include "immunize/util.hpp"

namespace immunize::testing {

/// Deterministic non-degenerate fixture with intensities in [0.1, 0.9],
/// leaving room for finite-difference probes.
inline ImageBuffer pattern_image(int h, int w) {
    std::vector<double> data(static_cast<std::size_t>(h) * w * 3);
    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int v = (y * 31 + x * 17 + c * 29) % 64;
                data[i++] = 0.1 + 0.8 * static_cast<double>(v) / 63.0;
            }
        }
    }
    return ImageBuffer(h, w, std::move(data));
}

inline ImageBuffer random_image(int h, int w, std::uint64_t seed, double lo = 0.0,
                                double hi = 1.0) {
    SplitMix64 rng(seed);
    std::vector<double> data(static_cast<std::size_t>(h) * w * 3);
    for (double& v : data) v = lo + (hi - lo) * rng.next_double();
    return ImageBuffer(h, w, std::move(data));
}

/// Central finite differences of a scalar function of the image, step 1e-5.
inline Tensor finite_difference_gradient(const std::function<double(const ImageBuffer&)>& f,
                                         const ImageBuffer& x, double step = 1e-5) {
    Tensor grad = Tensor::zeros({x.height(), x.width(), 3});
    std::vector<double> data = x.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double original = data[i];
        data[i] = original + step;
        const double up = f(ImageBuffer(x.height(), x.width(), data));
        data[i] = original - step;
        const double down = f(ImageBuffer(x.height(), x.width(), data));
        data[i] = original;
        grad.data[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

/// Norm-wise relative error ||a - b|| / (||a|| + ||b||).
inline double relative_error(const Tensor& a, const Tensor& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        diff += d * d;
        na += a.data[i] * a.data[i];
        nb += b.data[i] * b.data[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    if (denom == 0.0) return std::sqrt(diff);
    return std::sqrt(diff) / denom;
}

inline std::string tensor_checksum(const Tensor& t) {
    std::vector<std::uint8_t> bytes(t.data.size() * sizeof(double));
    std::memcpy(bytes.data(), t.data.data(), bytes.size());
    return sha256_hex(bytes);
}

inline std::string image_checksum(const ImageBuffer& img) {
    return sha256_hex(img.content_bytes());
}

inline std::string doubles_checksum(const std::vector<double>& v) {
    std::vector<std::uint8_t> bytes(v.size() * sizeof(double));
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return sha256_hex(bytes);
}

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("immunize_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace immunize::testing
