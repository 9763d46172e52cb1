#include "immunize/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace immunize {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

void check_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": image shapes differ");
    }
}

const std::vector<double>& gaussian_kernel() {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(kWindow);
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - (kWindow - 1) / 2.0;
            k[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return kernel;
}

// Separable Gaussian filter over one channel plane, evaluated only at
// positions where the window lies fully inside the image.
struct Plane {
    int h, w;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane extract_channel(const ImageBuffer& img, int c) {
    Plane p{img.height(), img.width(), std::vector<double>(
        static_cast<std::size_t>(img.height()) * img.width())};
    for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) p.v[static_cast<std::size_t>(y) * p.w + x] = img.at(y, x, c);
    }
    return p;
}

Plane multiply(const Plane& a, const Plane& b) {
    Plane out{a.h, a.w, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

// Valid-region filtering: output is (h - 10) x w horizontally filtered first,
// then vertically, yielding (h - 10) x (w - 10).
Plane gaussian_valid(const Plane& in) {
    const auto& k = gaussian_kernel();
    const int oh = in.h - kWindow + 1;
    const int ow = in.w - kWindow + 1;
    Plane horiz{in.h, ow, std::vector<double>(static_cast<std::size_t>(in.h) * ow, 0.0)};
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) acc += k[i] * in.at(y, x + i);
            horiz.v[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow, 0.0)};
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) acc += k[i] * horiz.at(y + i, x);
            out.v[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    check_same_shape(a, b, "psnr");
    double mse = 0.0;
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        mse += d * d;
    }
    mse /= static_cast<double>(av.size());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    check_same_shape(a, b, "ssim");
    if (a.height() < kWindow || a.width() < kWindow) {
        throw ShapeError("ssim: image smaller than the 11x11 window");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < 3; ++c) {
        const Plane pa = extract_channel(a, c);
        const Plane pb = extract_channel(b, c);
        const Plane mu_a = gaussian_valid(pa);
        const Plane mu_b = gaussian_valid(pb);
        const Plane e_aa = gaussian_valid(multiply(pa, pa));
        const Plane e_bb = gaussian_valid(multiply(pb, pb));
        const Plane e_ab = gaussian_valid(multiply(pa, pb));
        for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
            const double ma = mu_a.v[i], mb = mu_b.v[i];
            const double var_a = e_aa.v[i] - ma * ma;
            const double var_b = e_bb.v[i] - mb * mb;
            const double cov = e_ab.v[i] - ma * mb;
            const double num = (2.0 * ma * mb + kC1) * (2.0 * cov + kC2);
            const double den = (ma * ma + mb * mb + kC1) * (var_a + var_b + kC2);
            total += num / den;
        }
        count += mu_a.v.size();
    }
    return total / static_cast<double>(count);
}

MetricRegistry::MetricRegistry() {
    entries_.push_back({"psnr", [](const ImageBuffer& a, const ImageBuffer& b) { return psnr(a, b); },
                        MetricOrientation::LowerBetter});
    entries_.push_back({"ssim", [](const ImageBuffer& a, const ImageBuffer& b) { return ssim(a, b); },
                        MetricOrientation::LowerBetter});
}

void MetricRegistry::register_plugin(const std::string& name, MetricFn fn,
                                     MetricOrientation orientation) {
    if (name.empty()) throw ConfigError("metric plugin needs a name");
    for (const Entry& e : entries_) {
        if (e.name == name) throw ConfigError("duplicate metric name: " + name);
    }
    entries_.push_back({name, std::move(fn), orientation});
}

MetricReport MetricRegistry::evaluate(const ImageBuffer& a, const ImageBuffer& b) const {
    MetricReport report;
    for (const Entry& e : entries_) {
        report.names.push_back(e.name);
        report.orientation[e.name] = e.orientation;
        try {
            report.values[e.name] = e.fn(a, b);
        } catch (const std::exception&) {
            report.values[e.name] = std::nullopt;  // plugin failures never abort a run
        }
    }
    return report;
}

std::vector<std::string> MetricRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.push_back(e.name);
    return out;
}

}  // namespace immunize
