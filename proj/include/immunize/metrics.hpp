#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "immunize/image.hpp"

namespace immunize {

/// Reporting direction in the immunization tables: PSNR/SSIM lower is
/// better, LPIPS-style plugins may declare higher-better.
enum class MetricOrientation {
    LowerBetter,
    HigherBetter,
};

/// Metric values for one image pair. A missing optional marks a plugin that
/// failed for this pair; the run carries on.
struct MetricReport {
    std::vector<std::string> names;  // evaluation order: psnr, ssim, then plugins
    std::map<std::string, std::optional<double>> values;
    std::map<std::string, MetricOrientation> orientation;
};

/// Peak signal-to-noise ratio 10*log10(1/MSE) for intensities in [0, 1],
/// capped at 100.0 so identical images serialize cleanly.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Mean structural similarity over 11x11 Gaussian windows (sigma 1.5,
/// K1 0.01, K2 0.03, dynamic range 1.0), computed per channel over fully
/// interior windows and averaged. Requires min(height, width) >= 11.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

using MetricFn = std::function<double(const ImageBuffer&, const ImageBuffer&)>;

/// Holds the built-in metrics plus registered plugins (the slot where
/// learned or reference metrics such as LPIPS/VIFp/FSIM plug in). Register
/// everything at startup; evaluation is read-only and thread-safe.
class MetricRegistry {
public:
    MetricRegistry();

    /// Throws ConfigError on duplicate names (including "psnr"/"ssim").
    void register_plugin(const std::string& name, MetricFn fn, MetricOrientation orientation);

    /// Computes every metric for the pair. A throwing plugin yields a
    /// missing cell instead of aborting.
    MetricReport evaluate(const ImageBuffer& a, const ImageBuffer& b) const;

    std::vector<std::string> names() const;

private:
    struct Entry {
        std::string name;
        MetricFn fn;
        MetricOrientation orientation;
    };
    std::vector<Entry> entries_;
};

}  // namespace immunize
