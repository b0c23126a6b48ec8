#pragma once

#include <cmath>
#include <vector>

#include "srdet/core/tensor.hpp"

namespace srdet {

namespace detail {

/// Catmull-Rom cubic kernel (a = -0.5).
inline double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

/// Four source taps and weights for one output coordinate along one axis.
/// Half-pixel center convention, indices clamped to the edge, weights
/// normalized so constants are preserved exactly.
struct CubicTaps {
    int idx[4];
    double w[4];
};

inline std::vector<CubicTaps> cubic_tap_table(int in_size, int out_size) {
    const double scale = static_cast<double>(out_size) / in_size;
    std::vector<CubicTaps> taps(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double src = (o + 0.5) / scale - 0.5;
        const int base = static_cast<int>(std::floor(src));
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
            const int i = base - 1 + k;
            taps[o].idx[k] = std::clamp(i, 0, in_size - 1);
            taps[o].w[k] = cubic_kernel(src - i);
            sum += taps[o].w[k];
        }
        for (double& w : taps[o].w) w /= sum;
    }
    return taps;
}

} // namespace detail

/// Bicubic resize to an explicit output size. Separable, deterministic, and
/// linear in the input (the training graph reuses the same tap tables for
/// its backward pass).
template <typename T>
Tensor<T> bicubic_resize_to(const Tensor<T>& in, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw ValidationError("bicubic output size must be >= 1, got " + std::to_string(out_h) +
                              "x" + std::to_string(out_w));
    const auto xt = detail::cubic_tap_table(in.width(), out_w);
    const auto yt = detail::cubic_tap_table(in.height(), out_h);

    // Horizontal pass, then vertical.
    Tensor<T> mid(in.channels(), in.height(), out_w);
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < in.height(); ++y) {
            const T* src = in.row(c, y);
            T* dst = mid.row(c, y);
            for (int x = 0; x < out_w; ++x) {
                const auto& t = xt[x];
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += t.w[k] * src[t.idx[k]];
                dst[x] = static_cast<T>(acc);
            }
        }

    Tensor<T> out(in.channels(), out_h, out_w);
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < out_h; ++y) {
            const auto& t = yt[y];
            const T* r0 = mid.row(c, t.idx[0]);
            const T* r1 = mid.row(c, t.idx[1]);
            const T* r2 = mid.row(c, t.idx[2]);
            const T* r3 = mid.row(c, t.idx[3]);
            T* dst = out.row(c, y);
            for (int x = 0; x < out_w; ++x)
                dst[x] = static_cast<T>(t.w[0] * r0[x] + t.w[1] * r1[x] + t.w[2] * r2[x] +
                                        t.w[3] * r3[x]);
        }
    return out;
}

/// Bicubic resize by a scale factor; output dims = round(scale * input dims).
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& in, double scale) {
    if (!(scale > 0.0)) throw ValidationError("bicubic scale must be positive");
    const int oh = static_cast<int>(std::lround(scale * in.height()));
    const int ow = static_cast<int>(std::lround(scale * in.width()));
    if (oh < 1 || ow < 1) throw ValidationError("bicubic scale produces a degenerate output size");
    if (oh == in.height() && ow == in.width()) return in;
    return bicubic_resize_to(in, oh, ow);
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& in) {
    Tensor<T> out(in.shape());
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < in.height(); ++y) {
            const T* src = in.row(c, y);
            T* dst = out.row(c, y);
            for (int x = 0; x < in.width(); ++x) dst[x] = src[in.width() - 1 - x];
        }
    return out;
}

template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& in) {
    Tensor<T> out(in.shape());
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < in.height(); ++y) {
            const T* src = in.row(c, in.height() - 1 - y);
            T* dst = out.row(c, y);
            for (int x = 0; x < in.width(); ++x) dst[x] = src[x];
        }
    return out;
}

/// Rotate 90 degrees clockwise: out[y][x] = in[H-1-x][y], output (C,W,H).
template <typename T>
Tensor<T> rotate90_cw(const Tensor<T>& in) {
    Tensor<T> out(in.channels(), in.width(), in.height());
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < out.height(); ++y) {
            T* dst = out.row(c, y);
            for (int x = 0; x < out.width(); ++x) dst[x] = in.at(c, in.height() - 1 - x, y);
        }
    return out;
}

} // namespace srdet
