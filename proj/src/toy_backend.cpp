#include "immunize/toy_backend.hpp"

#include <algorithm>
#include <cmath>

#include "immunize/rng.hpp"

namespace immunize {

namespace {

constexpr int kEnc1Ch = 8;
constexpr int kEnc2Ch = 12;
constexpr int kMidCh = 16;
constexpr int kDec1Ch = 16;
constexpr int kDec2Ch = 8;

constexpr std::uint64_t kTimeEmbedSalt = 0x71E5ULL;

int half_up(int v) { return (v + 1) / 2; }

Tensor image_to_chw(const ImageBuffer& x) {
    Tensor out = Tensor::zeros({3, x.height(), x.width()});
    for (int y = 0; y < x.height(); ++y) {
        for (int ix = 0; ix < x.width(); ++ix) {
            for (int c = 0; c < 3; ++c) {
                out.at(c, y, ix) = x.at(y, ix, c);
            }
        }
    }
    return out;
}

Tensor chw_to_hwc(const Tensor& t) {
    Tensor out = Tensor::zeros({t.shape[1], t.shape[2], t.shape[0]});
    for (int c = 0; c < t.shape[0]; ++c) {
        for (int y = 0; y < t.shape[1]; ++y) {
            for (int x = 0; x < t.shape[2]; ++x) {
                out.data[(static_cast<std::size_t>(y) * t.shape[2] + x) * t.shape[0] + c] =
                    t.at(c, y, x);
            }
        }
    }
    return out;
}

Tensor conv3x3(const Tensor& in, int out_ch, const std::vector<double>& w,
               const std::vector<double>& b) {
    const int in_ch = in.shape[0], h = in.shape[1], width = in.shape[2];
    Tensor out = Tensor::zeros({out_ch, h, width});
    for (int oc = 0; oc < out_ch; ++oc) {
        const double* wk = w.data() + static_cast<std::size_t>(oc) * in_ch * 9;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < width; ++x) {
                double acc = b[oc];
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* k = wk + ic * 9;
                    for (int dy = 0; dy < 3; ++dy) {
                        const int sy = y + dy - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int dx = 0; dx < 3; ++dx) {
                            const int sx = x + dx - 1;
                            if (sx < 0 || sx >= width) continue;
                            acc += k[dy * 3 + dx] * in.at(ic, sy, sx);
                        }
                    }
                }
                out.at(oc, y, x) = acc;
            }
        }
    }
    return out;
}

// Gradient of conv3x3 with respect to its input (weights are fixed).
Tensor conv3x3_backward(const Tensor& g_out, int in_ch, int in_h, int in_w,
                        const std::vector<double>& w) {
    const int out_ch = g_out.shape[0];
    Tensor g_in = Tensor::zeros({in_ch, in_h, in_w});
    for (int oc = 0; oc < out_ch; ++oc) {
        const double* wk = w.data() + static_cast<std::size_t>(oc) * in_ch * 9;
        for (int y = 0; y < g_out.shape[1]; ++y) {
            for (int x = 0; x < g_out.shape[2]; ++x) {
                const double g = g_out.at(oc, y, x);
                if (g == 0.0) continue;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* k = wk + ic * 9;
                    for (int dy = 0; dy < 3; ++dy) {
                        const int sy = y + dy - 1;
                        if (sy < 0 || sy >= in_h) continue;
                        for (int dx = 0; dx < 3; ++dx) {
                            const int sx = x + dx - 1;
                            if (sx < 0 || sx >= in_w) continue;
                            g_in.at(ic, sy, sx) += g * k[dy * 3 + dx];
                        }
                    }
                }
            }
        }
    }
    return g_in;
}

Tensor tanh_forward(const Tensor& in) {
    Tensor out = in;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

// g_pre = g_post * (1 - a^2) where a is the activated output.
Tensor tanh_backward(const Tensor& g_post, const Tensor& activated) {
    Tensor g = g_post;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        g.data[i] *= 1.0 - activated.data[i] * activated.data[i];
    }
    return g;
}

// 2x2 average pooling with ceil-mode output and partial edge windows.
Tensor avgpool2(const Tensor& in) {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int oh = half_up(h), ow = half_up(w);
    Tensor out = Tensor::zeros({c, oh, ow});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            const int y0 = 2 * y, y1 = std::min(2 * y + 2, h);
            for (int x = 0; x < ow; ++x) {
                const int x0 = 2 * x, x1 = std::min(2 * x + 2, w);
                double acc = 0.0;
                for (int sy = y0; sy < y1; ++sy) {
                    for (int sx = x0; sx < x1; ++sx) acc += in.at(ch, sy, sx);
                }
                out.at(ch, y, x) = acc / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    return out;
}

Tensor avgpool2_backward(const Tensor& g_out, int in_h, int in_w) {
    const int c = g_out.shape[0];
    Tensor g_in = Tensor::zeros({c, in_h, in_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < g_out.shape[1]; ++y) {
            const int y0 = 2 * y, y1 = std::min(2 * y + 2, in_h);
            for (int x = 0; x < g_out.shape[2]; ++x) {
                const int x0 = 2 * x, x1 = std::min(2 * x + 2, in_w);
                const double g = g_out.at(ch, y, x) / ((y1 - y0) * (x1 - x0));
                for (int sy = y0; sy < y1; ++sy) {
                    for (int sx = x0; sx < x1; ++sx) g_in.at(ch, sy, sx) += g;
                }
            }
        }
    }
    return g_in;
}

void add_channel_bias(Tensor& t, const std::vector<double>& bias) {
    for (int c = 0; c < t.shape[0]; ++c) {
        const double b = bias[c];
        for (int y = 0; y < t.shape[1]; ++y) {
            for (int x = 0; x < t.shape[2]; ++x) t.at(c, y, x) += b;
        }
    }
}

}  // namespace

struct ToyBackend::Forward {
    Tensor z;
    Tensor enc1, pool1;
    Tensor enc2, pool2;
    Tensor mid;
    Tensor up1, dec1;
    Tensor up2, dec2;
    Tensor head;
};

const std::vector<std::string>& ToyBackend::known_layers() {
    static const std::vector<std::string> layers = {"enc1",  "enc2", "bottleneck",
                                                    "dec1", "dec2", "head"};
    return layers;
}

BackendDescriptor ToyBackend::default_descriptor(std::uint64_t noise_seed) {
    BackendDescriptor d;
    d.name = "toy";
    d.layer_selection = {"bottleneck", "dec1"};
    d.schedule_length = 10;
    d.noise_seed = noise_seed;
    return d;
}

ToyBackend::ToyBackend(BackendDescriptor descriptor, std::uint64_t weight_seed)
    : descriptor_(std::move(descriptor)) {
    descriptor_.validate();
    const auto& known = known_layers();
    for (const auto& layer : descriptor_.layer_selection) {
        if (std::find(known.begin(), known.end(), layer) == known.end()) {
            throw ConfigError("unknown toy backend layer: " + layer);
        }
    }

    SplitMix64 rng(weight_seed);
    auto make_conv = [&rng](int in_ch, int out_ch) {
        Conv conv;
        conv.in_ch = in_ch;
        conv.out_ch = out_ch;
        conv.weights.resize(static_cast<std::size_t>(out_ch) * in_ch * 9);
        conv.bias.resize(out_ch);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in_ch) * 9.0);
        for (double& w : conv.weights) w = rng.next_gaussian() * scale;
        for (double& b : conv.bias) b = rng.next_gaussian() * 0.05;
        return conv;
    };
    enc1_ = make_conv(3, kEnc1Ch);
    enc2_ = make_conv(kEnc1Ch, kEnc2Ch);
    mid_ = make_conv(kEnc2Ch, kMidCh);
    dec1_ = make_conv(kMidCh, kDec1Ch);
    dec2_ = make_conv(kDec1Ch, kDec2Ch);
    head_ = make_conv(kDec2Ch, 3);
}

double ToyBackend::alpha_bar(int t) const {
    check_timestep(t);
    return 1.0 - static_cast<double>(t) / static_cast<double>(descriptor_.schedule_length);
}

void ToyBackend::check_timestep(int t) const {
    if (t < 0 || t >= descriptor_.schedule_length) {
        throw ConfigError("timestep " + std::to_string(t) + " outside schedule [0, " +
                          std::to_string(descriptor_.schedule_length - 1) + "]");
    }
}

Tensor ToyBackend::noisy_latent(const ImageBuffer& x, int t, std::uint64_t seed) const {
    const double abar = alpha_bar(t);
    Tensor z = image_to_chw(x);
    if (t == 0) return z;  // abar == 1: no noise mixed in
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    SplitMix64 rng(mix_seeds(seed, static_cast<std::uint64_t>(t)));
    for (double& v : z.data) {
        v = signal * v + noise * rng.next_gaussian();
    }
    return z;
}

std::vector<double> ToyBackend::prompt_embedding(const EditPrompt& c) const {
    c.validate();
    SplitMix64 rng(fnv1a64(c.text));
    double strength = 1.0;
    if (auto it = c.guidance.find("strength"); it != c.guidance.end()) {
        strength = it->second;
    }
    std::vector<double> emb(kMidCh);
    for (double& v : emb) v = rng.next_gaussian() * 0.5 * strength;
    return emb;
}

std::vector<double> ToyBackend::time_embedding(int t) const {
    SplitMix64 rng(mix_seeds(kTimeEmbedSalt, static_cast<std::uint64_t>(t)));
    std::vector<double> emb(kMidCh);
    for (double& v : emb) v = rng.next_gaussian() * 0.5;
    return emb;
}

void ToyBackend::run_forward(const Tensor& z, const EditPrompt& c, int t, Forward& f) const {
    f.z = z;
    f.enc1 = tanh_forward(conv3x3(f.z, enc1_.out_ch, enc1_.weights, enc1_.bias));
    f.pool1 = avgpool2(f.enc1);
    f.enc2 = tanh_forward(conv3x3(f.pool1, enc2_.out_ch, enc2_.weights, enc2_.bias));
    f.pool2 = avgpool2(f.enc2);

    Tensor mid_pre = conv3x3(f.pool2, mid_.out_ch, mid_.weights, mid_.bias);
    add_channel_bias(mid_pre, prompt_embedding(c));
    add_channel_bias(mid_pre, time_embedding(t));
    f.mid = tanh_forward(mid_pre);

    f.up1 = nearest_resize(f.mid, f.enc2.shape[1], f.enc2.shape[2]);
    f.dec1 = tanh_forward(conv3x3(f.up1, dec1_.out_ch, dec1_.weights, dec1_.bias));
    f.up2 = nearest_resize(f.dec1, f.enc1.shape[1], f.enc1.shape[2]);
    f.dec2 = tanh_forward(conv3x3(f.up2, dec2_.out_ch, dec2_.weights, dec2_.bias));
    f.head = conv3x3(f.dec2, head_.out_ch, head_.weights, head_.bias);
}

Tensor ToyBackend::predict_noise(const Tensor& z, const EditPrompt& c, int t) const {
    Forward f;
    run_forward(z, c, t, f);
    return f.head;
}

FeatureTensor ToyBackend::aggregate_from_forward(const Forward& f, int t) const {
    std::vector<const Tensor*> selected;
    for (const auto& layer : descriptor_.layer_selection) {
        if (layer == "enc1") selected.push_back(&f.enc1);
        else if (layer == "enc2") selected.push_back(&f.enc2);
        else if (layer == "bottleneck") selected.push_back(&f.mid);
        else if (layer == "dec1") selected.push_back(&f.dec1);
        else if (layer == "dec2") selected.push_back(&f.dec2);
        else selected.push_back(&f.head);
    }
    return aggregate_layer_outputs(selected, t);
}

FeatureTensor ToyBackend::aggregate_features(const ImageBuffer& x, const EditPrompt& c,
                                             int t) const {
    Forward f;
    run_forward(noisy_latent(x, t, descriptor_.noise_seed), c, t, f);
    return aggregate_from_forward(f, t);
}

Tensor ToyBackend::layer_output(const ImageBuffer& x, const EditPrompt& c, int t,
                                const std::string& layer) const {
    Forward f;
    run_forward(noisy_latent(x, t, descriptor_.noise_seed), c, t, f);
    if (layer == "enc1") return f.enc1;
    if (layer == "enc2") return f.enc2;
    if (layer == "bottleneck") return f.mid;
    if (layer == "dec1") return f.dec1;
    if (layer == "dec2") return f.dec2;
    if (layer == "head") return f.head;
    throw ConfigError("unknown toy backend layer: " + layer);
}

Tensor ToyBackend::loss_gradient(const ImageBuffer& x, const EditPrompt& c,
                                 std::span<const TimestepLoss> losses) const {
    Tensor g_x = Tensor::zeros({x.height(), x.width(), 3});
    for (const TimestepLoss& item : losses) {
        check_timestep(item.timestep);
        if (item.loss == nullptr) throw ConfigError("loss_gradient: null loss entry");

        Forward f;
        run_forward(noisy_latent(x, item.timestep, descriptor_.noise_seed), c, item.timestep, f);
        const FeatureTensor phi = aggregate_from_forward(f, item.timestep);
        Tensor g_phi = item.loss->gradient(phi.values);
        if (!g_phi.same_shape(phi.values)) {
            throw ShapeError("feature loss gradient shape differs from the feature tensor");
        }

        // Scatter d(loss)/d(phi) back onto each selected layer: the average
        // contributes 1/M, the resample transposes to the layer's own shape.
        const double inv_m = 1.0 / static_cast<double>(descriptor_.layer_selection.size());
        Tensor g_enc1 = Tensor::zeros(f.enc1.shape);
        Tensor g_enc2 = Tensor::zeros(f.enc2.shape);
        Tensor g_mid = Tensor::zeros(f.mid.shape);
        Tensor g_dec1 = Tensor::zeros(f.dec1.shape);
        Tensor g_dec2 = Tensor::zeros(f.dec2.shape);
        Tensor g_head = Tensor::zeros(f.head.shape);
        for (const auto& layer : descriptor_.layer_selection) {
            Tensor* target = nullptr;
            if (layer == "enc1") target = &g_enc1;
            else if (layer == "enc2") target = &g_enc2;
            else if (layer == "bottleneck") target = &g_mid;
            else if (layer == "dec1") target = &g_dec1;
            else if (layer == "dec2") target = &g_dec2;
            else target = &g_head;
            Tensor scattered = nearest_resize_backward(g_phi, target->shape[1], target->shape[2]);
            for (std::size_t i = 0; i < target->data.size(); ++i) {
                target->data[i] += inv_m * scattered.data[i];
            }
        }

        // Reverse sweep through the network down to the latent.
        Tensor g = conv3x3_backward(g_head, head_.in_ch, f.dec2.shape[1], f.dec2.shape[2],
                                    head_.weights);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_dec2.data[i];
        g = conv3x3_backward(tanh_backward(g, f.dec2), dec2_.in_ch, f.up2.shape[1],
                             f.up2.shape[2], dec2_.weights);
        g = nearest_resize_backward(g, f.dec1.shape[1], f.dec1.shape[2]);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_dec1.data[i];
        g = conv3x3_backward(tanh_backward(g, f.dec1), dec1_.in_ch, f.up1.shape[1],
                             f.up1.shape[2], dec1_.weights);
        g = nearest_resize_backward(g, f.mid.shape[1], f.mid.shape[2]);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_mid.data[i];
        g = conv3x3_backward(tanh_backward(g, f.mid), mid_.in_ch, f.pool2.shape[1],
                             f.pool2.shape[2], mid_.weights);
        g = avgpool2_backward(g, f.enc2.shape[1], f.enc2.shape[2]);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_enc2.data[i];
        g = conv3x3_backward(tanh_backward(g, f.enc2), enc2_.in_ch, f.pool1.shape[1],
                             f.pool1.shape[2], enc2_.weights);
        g = avgpool2_backward(g, f.enc1.shape[1], f.enc1.shape[2]);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_enc1.data[i];
        g = conv3x3_backward(tanh_backward(g, f.enc1), enc1_.in_ch, f.z.shape[1], f.z.shape[2],
                             enc1_.weights);

        // dz/dx is sqrt(abar_t) on the diagonal.
        const double signal = std::sqrt(alpha_bar(item.timestep));
        Tensor g_hwc = chw_to_hwc(g);
        for (std::size_t i = 0; i < g_x.data.size(); ++i) {
            g_x.data[i] += signal * g_hwc.data[i];
        }
    }
    return g_x;
}

ImageBuffer ToyBackend::edit(const ImageBuffer& x, const EditPrompt& c,
                             std::uint64_t sampler_seed) const {
    c.validate();
    const int start_t = descriptor_.schedule_length - 1;
    Tensor z = noisy_latent(x, start_t, sampler_seed);
    for (int t = start_t; t >= 1; --t) {
        const double abar = alpha_bar(t);
        const double abar_prev = alpha_bar(t - 1);
        const Tensor eta = predict_noise(z, c, t);
        const double inv_signal = 1.0 / std::sqrt(abar);
        const double noise = std::sqrt(1.0 - abar);
        const double sig_prev = std::sqrt(abar_prev);
        const double noise_prev = std::sqrt(1.0 - abar_prev);
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            const double z0_hat = (z.data[i] - noise * eta.data[i]) * inv_signal;
            z.data[i] = sig_prev * z0_hat + noise_prev * eta.data[i];
        }
    }
    std::vector<double> out(z.data.size());
    Tensor hwc = chw_to_hwc(z);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(hwc.data[i], 0.0, 1.0);
    }
    return ImageBuffer(x.height(), x.width(), std::move(out));
}

}  // namespace immunize
