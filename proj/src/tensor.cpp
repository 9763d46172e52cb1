#include "immunize/tensor.hpp"

namespace immunize {

Tensor nearest_resize(const Tensor& in, int out_h, int out_w) {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    if (h == out_h && w == out_w) return in;
    Tensor out = Tensor::zeros({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < out_h; ++y) {
            const int sy = static_cast<int>(static_cast<std::int64_t>(y) * h / out_h);
            for (int x = 0; x < out_w; ++x) {
                const int sx = static_cast<int>(static_cast<std::int64_t>(x) * w / out_w);
                out.at(ch, y, x) = in.at(ch, sy, sx);
            }
        }
    }
    return out;
}

Tensor nearest_resize_backward(const Tensor& g_out, int in_h, int in_w) {
    const int c = g_out.shape[0], oh = g_out.shape[1], ow = g_out.shape[2];
    if (oh == in_h && ow == in_w) return g_out;
    Tensor g_in = Tensor::zeros({c, in_h, in_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            const int sy = static_cast<int>(static_cast<std::int64_t>(y) * in_h / oh);
            for (int x = 0; x < ow; ++x) {
                const int sx = static_cast<int>(static_cast<std::int64_t>(x) * in_w / ow);
                g_in.at(ch, sy, sx) += g_out.at(ch, y, x);
            }
        }
    }
    return g_in;
}

}  // namespace immunize
