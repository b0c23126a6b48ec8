#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "srdet/core/graph.hpp"
#include "srdet/core/resample.hpp"
#include "srdet/core/tensor.hpp"
#include "srdet/core/threading.hpp"

namespace srdet {

// ---------------------------------------------------------------------------
// Raw kernels. Weights are stored (out_ch, in_ch, k*k); all loops stream
// whole rows so the inner loop vectorizes.
// ---------------------------------------------------------------------------

namespace detail {

inline int ceil_div(int a, int b) { return a > 0 ? (a + b - 1) / b : a / b; }
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& bias, int k,
                    int stride, int pad, Tensor<T>& out) {
    const int H = in.height(), W = in.width();
    const int OH = out.height(), OW = out.width();
    parallel_for(out.channels(), [&](int oc_lo, int oc_hi) {
        for (int oc = oc_lo; oc < oc_hi; ++oc) {
            T* plane = out.row(oc, 0);
            std::fill(plane, plane + static_cast<std::size_t>(OH) * OW, bias[oc]);
            for (int ic = 0; ic < in.channels(); ++ic)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = w.at(oc, ic, ky * k + kx);
                        const int xlo = std::max(0, ceil_div(pad - kx, stride));
                        const int xhi = std::min(OW, floor_div(W - 1 - kx + pad, stride) + 1);
                        if (xlo >= xhi) continue;
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            const T* irow = in.row(ic, iy) - pad + kx;
                            T* orow = out.row(oc, oy);
                            if (stride == 1) {
                                for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wv * irow[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox)
                                    orow[ox] += wv * irow[ox * stride];
                            }
                        }
                    }
        }
    });
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& w, int k, int stride, int pad,
                           Tensor<T>& gin) {
    const int H = gin.height(), W = gin.width();
    const int OH = gout.height(), OW = gout.width();
    parallel_for(gin.channels(), [&](int ic_lo, int ic_hi) {
        for (int ic = ic_lo; ic < ic_hi; ++ic)
            for (int oc = 0; oc < gout.channels(); ++oc)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = w.at(oc, ic, ky * k + kx);
                        const int xlo = std::max(0, ceil_div(pad - kx, stride));
                        const int xhi = std::min(OW, floor_div(W - 1 - kx + pad, stride) + 1);
                        if (xlo >= xhi) continue;
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            T* grow = gin.row(ic, iy) - pad + kx;
                            const T* orow = gout.row(oc, oy);
                            if (stride == 1) {
                                for (int ox = xlo; ox < xhi; ++ox) grow[ox] += wv * orow[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox)
                                    grow[ox * stride] += wv * orow[ox];
                            }
                        }
                    }
    });
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& in, const Tensor<T>& gout, int k, int stride, int pad,
                            Tensor<T>& gw, Tensor<T>& gb) {
    const int H = in.height(), W = in.width();
    const int OH = gout.height(), OW = gout.width();
    parallel_for(gout.channels(), [&](int oc_lo, int oc_hi) {
        for (int oc = oc_lo; oc < oc_hi; ++oc) {
            T bacc = T(0);
            const T* gplane = gout.row(oc, 0);
            for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i) bacc += gplane[i];
            gb[oc] += bacc;
            for (int ic = 0; ic < in.channels(); ++ic)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const int xlo = std::max(0, ceil_div(pad - kx, stride));
                        const int xhi = std::min(OW, floor_div(W - 1 - kx + pad, stride) + 1);
                        if (xlo >= xhi) continue;
                        T acc = T(0);
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            const T* irow = in.row(ic, iy) - pad + kx;
                            const T* orow = gout.row(oc, oy);
                            if (stride == 1) {
                                for (int ox = xlo; ox < xhi; ++ox) acc += orow[ox] * irow[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox)
                                    acc += orow[ox] * irow[ox * stride];
                            }
                        }
                        gw.at(oc, ic, ky * k + kx) += acc;
                    }
        }
    });
}

} // namespace detail

/// Weight tensor layout for a k×k convolution with out_ch filters.
inline Shape conv_weight_shape(int out_ch, int in_ch, int k) { return Shape{out_ch, in_ch, k * k}; }

// ---------------------------------------------------------------------------
// Graph ops
// ---------------------------------------------------------------------------

/// 2D convolution. Weights (out_ch, in_ch, k*k), bias (out_ch,1,1);
/// k must be 1 or 3, the only kernel sizes the architecture uses.
template <typename T>
Value<T> conv2d(const Value<T>& x, const Value<T>& w, const Value<T>& b, int stride = 1,
                int pad = 0) {
    const Shape ws = w->value.shape();
    const int k = ws.w == 1 ? 1 : 3;
    if (k * k != ws.w || (k != 1 && k != 3))
        throw ValidationError("conv kernel must be 1x1 or 3x3, weight shape " + ws.str());
    if (x->value.channels() != ws.h)
        throw ShapeError("conv input channels " + std::to_string(x->value.channels()) +
                         " != weight in_ch " + std::to_string(ws.h));
    if (b->value.shape() != Shape{ws.c, 1, 1})
        throw ShapeError("conv bias shape " + b->value.shape().str());
    if (stride < 1 || pad < 0) throw ValidationError("conv stride/pad out of range");
    if (!w->value.all_finite() || !b->value.all_finite())
        throw ValidationError("non-finite convolution weights");
    const int oh = detail::conv_out_size(x->value.height(), k, stride, pad);
    const int ow = detail::conv_out_size(x->value.width(), k, stride, pad);
    if (oh < 1 || ow < 1) throw ShapeError("conv output collapses to zero size");

    Tensor<T> out(ws.c, oh, ow);
    detail::conv2d_forward(x->value, w->value, b->value, k, stride, pad, out);
    auto node = make_node(std::move(out));
    node->parents = {x, w, b};
    node->requires_grad = x->requires_grad || w->requires_grad || b->requires_grad;
    if (node->requires_grad) {
        node->backprop = [k, stride, pad](Node<T>& self) {
            auto& x_ = *self.parents[0];
            auto& w_ = *self.parents[1];
            auto& b_ = *self.parents[2];
            if (x_.requires_grad)
                detail::conv2d_backward_input(self.grad, w_.value, k, stride, pad, x_.ensure_grad());
            if (w_.requires_grad || b_.requires_grad)
                detail::conv2d_backward_params(x_.value, self.grad, k, stride, pad, w_.ensure_grad(),
                                               b_.ensure_grad());
        };
    }
    return node;
}

template <typename T>
Value<T> relu(const Value<T>& x) {
    Tensor<T> out(x->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    auto node = make_node(std::move(out));
    node->parents = {x};
    node->requires_grad = x->requires_grad;
    if (node->requires_grad)
        node->backprop = [](Node<T>& self) {
            auto& x_ = *self.parents[0];
            Tensor<T>& g = x_.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x_.value[i] > T(0)) g[i] += self.grad[i];
        };
    return node;
}

template <typename T>
Value<T> add(const Value<T>& a, const Value<T>& b) {
    if (a->value.shape() != b->value.shape())
        throw ShapeError("add shapes differ: " + a->value.shape().str() + " vs " +
                         b->value.shape().str());
    Tensor<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    auto node = make_node(std::move(out));
    node->parents = {a, b};
    node->requires_grad = a->requires_grad || b->requires_grad;
    if (node->requires_grad)
        node->backprop = [](Node<T>& self) {
            for (int p = 0; p < 2; ++p) {
                auto& par = *self.parents[p];
                if (!par.requires_grad) continue;
                Tensor<T>& g = par.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        };
    return node;
}

/// Channel concatenation; all inputs share H and W.
template <typename T>
Value<T> concat_channels(const std::vector<Value<T>>& xs) {
    if (xs.empty()) throw ValidationError("concat of zero tensors");
    const int h = xs[0]->value.height(), w = xs[0]->value.width();
    int c = 0;
    for (const auto& x : xs) {
        if (x->value.height() != h || x->value.width() != w)
            throw ShapeError("concat spatial mismatch");
        c += x->value.channels();
    }
    Tensor<T> out(c, h, w);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), out.data() + off);
        off += x->value.size();
    }
    auto node = make_node(std::move(out));
    node->parents = xs;
    node->requires_grad = any_requires_grad(xs);
    if (node->requires_grad)
        node->backprop = [](Node<T>& self) {
            std::size_t off = 0;
            for (auto& p : self.parents) {
                if (p->requires_grad) {
                    Tensor<T>& g = p->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
                }
                off += p->value.size();
            }
        };
    return node;
}

/// Sub-pixel rearrangement: out[c, r*h+i, r*w+j] = in[c*r^2 + i*r + j, h, w].
template <typename T>
Value<T> pixel_shuffle(const Value<T>& x, int r) {
    if (r < 1) throw ValidationError("pixel_shuffle factor must be >= 1");
    const Shape s = x->value.shape();
    if (s.c % (r * r) != 0)
        throw ShapeError("pixel_shuffle channels " + std::to_string(s.c) +
                         " not divisible by r^2=" + std::to_string(r * r));
    if (r == 1) return x;
    Tensor<T> out(s.c / (r * r), s.h * r, s.w * r);
    for (int c = 0; c < out.channels(); ++c)
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                const int ic = c * r * r + i * r + j;
                for (int y = 0; y < s.h; ++y) {
                    const T* src = x->value.row(ic, y);
                    T* dst = out.row(c, y * r + i) + j;
                    for (int xx = 0; xx < s.w; ++xx) dst[xx * r] = src[xx];
                }
            }
    auto node = make_node(std::move(out));
    node->parents = {x};
    node->requires_grad = x->requires_grad;
    if (node->requires_grad)
        node->backprop = [r, s](Node<T>& self) {
            auto& x_ = *self.parents[0];
            Tensor<T>& g = x_.ensure_grad();
            for (int c = 0; c < self.value.channels(); ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        const int ic = c * r * r + i * r + j;
                        for (int y = 0; y < s.h; ++y) {
                            const T* src = self.grad.row(c, y * r + i) + j;
                            T* dst = g.row(ic, y);
                            for (int xx = 0; xx < s.w; ++xx) dst[xx] += src[xx * r];
                        }
                    }
        };
    return node;
}

/// 2x2 max pooling with stride 2 (odd trailing row/column dropped).
template <typename T>
Value<T> max_pool2(const Value<T>& x) {
    const Shape s = x->value.shape();
    const int oh = s.h / 2, ow = s.w / 2;
    if (oh < 1 || ow < 1) throw ShapeError("max_pool2 input too small: " + s.str());
    Tensor<T> out(s.c, oh, ow);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < oh; ++y) {
            const T* r0 = x->value.row(c, 2 * y);
            const T* r1 = x->value.row(c, 2 * y + 1);
            T* dst = out.row(c, y);
            for (int xx = 0; xx < ow; ++xx) {
                const std::size_t base = x->value.index(c, 2 * y, 2 * xx);
                T best = r0[2 * xx];
                std::uint32_t bi = static_cast<std::uint32_t>(base);
                if (r0[2 * xx + 1] > best) { best = r0[2 * xx + 1]; bi = base + 1; }
                if (r1[2 * xx] > best) { best = r1[2 * xx]; bi = base + s.w; }
                if (r1[2 * xx + 1] > best) { best = r1[2 * xx + 1]; bi = base + s.w + 1; }
                dst[xx] = best;
                (*argmax)[out.index(c, y, xx)] = bi;
            }
        }
    auto node = make_node(std::move(out));
    node->parents = {x};
    node->requires_grad = x->requires_grad;
    if (node->requires_grad)
        node->backprop = [argmax](Node<T>& self) {
            Tensor<T>& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*argmax)[i]] += self.grad[i];
        };
    return node;
}

/// Differentiable bicubic resize (linear map; backward scatters through the
/// same tap tables).
template <typename T>
Value<T> resize_bicubic(const Value<T>& x, int out_h, int out_w) {
    const Shape s = x->value.shape();
    if (s.h == out_h && s.w == out_w) return x;
    auto xt = std::make_shared<std::vector<detail::CubicTaps>>(detail::cubic_tap_table(s.w, out_w));
    auto yt = std::make_shared<std::vector<detail::CubicTaps>>(detail::cubic_tap_table(s.h, out_h));
    auto node = make_node(bicubic_resize_to(x->value, out_h, out_w));
    node->parents = {x};
    node->requires_grad = x->requires_grad;
    if (node->requires_grad)
        node->backprop = [xt, yt](Node<T>& self) {
            auto& x_ = *self.parents[0];
            Tensor<T>& g = x_.ensure_grad();
            for (int c = 0; c < self.value.channels(); ++c)
                for (int oy = 0; oy < self.value.height(); ++oy) {
                    const auto& ty = (*yt)[oy];
                    for (int ox = 0; ox < self.value.width(); ++ox) {
                        const auto& tx = (*xt)[ox];
                        const T gv = self.grad.at(c, oy, ox);
                        for (int a = 0; a < 4; ++a)
                            for (int b = 0; b < 4; ++b)
                                g.at(c, ty.idx[a], tx.idx[b]) +=
                                    static_cast<T>(ty.w[a] * tx.w[b]) * gv;
                    }
                }
        };
    return node;
}

/// Mean absolute difference; d/da = sign(a-b)/N.
template <typename T>
Value<T> l1_loss(const Value<T>& a, const Value<T>& b) {
    if (a->value.shape() != b->value.shape())
        throw ShapeError("l1_loss shapes differ: " + a->value.shape().str() + " vs " +
                         b->value.shape().str());
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i)
        acc += std::fabs(static_cast<double>(a->value[i] - b->value[i]));
    Tensor<T> out(1, 1, 1);
    out[0] = static_cast<T>(acc / a->value.size());
    auto node = make_node(std::move(out));
    node->parents = {a, b};
    node->requires_grad = a->requires_grad || b->requires_grad;
    if (node->requires_grad)
        node->backprop = [](Node<T>& self) {
            auto& a_ = *self.parents[0];
            auto& b_ = *self.parents[1];
            const T scale = self.grad[0] / static_cast<T>(a_.value.size());
            for (int p = 0; p < 2; ++p) {
                auto& par = *self.parents[p];
                if (!par.requires_grad) continue;
                Tensor<T>& g = par.ensure_grad();
                const T s = p == 0 ? scale : -scale;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const T d = a_.value[i] - b_.value[i];
                    if (d > T(0)) g[i] += s;
                    else if (d < T(0)) g[i] -= s;
                }
            }
        };
    return node;
}

/// a + b for scalar nodes.
template <typename T>
Value<T> add_scalars(const Value<T>& a, const Value<T>& b) {
    if (a->value.size() != 1 || b->value.size() != 1)
        throw ShapeError("add_scalars expects scalar nodes");
    return add(a, b);
}

template <typename T>
Value<T> scale_scalar(const Value<T>& a, double k) {
    if (a->value.size() != 1) throw ShapeError("scale_scalar expects a scalar node");
    Tensor<T> out(1, 1, 1);
    out[0] = static_cast<T>(a->value[0] * k);
    auto node = make_node(std::move(out));
    node->parents = {a};
    node->requires_grad = a->requires_grad;
    if (node->requires_grad)
        node->backprop = [k](Node<T>& self) {
            self.parents[0]->ensure_grad()[0] += self.grad[0] * static_cast<T>(k);
        };
    return node;
}

/// Reorders a head output (A*d, H, W) into rows (1, H*W*A, d) so that row
/// (y*W+x)*A + a holds anchor a of cell (y,x). Matches prior generation
/// order.
template <typename T>
Value<T> flatten_anchors(const Value<T>& x, int d) {
    const Shape s = x->value.shape();
    if (s.c % d != 0) throw ShapeError("flatten_anchors: channels not a multiple of " +
                                       std::to_string(d));
    const int anchors = s.c / d;
    Tensor<T> out(1, s.h * s.w * anchors, d);
    for (int a = 0; a < anchors; ++a)
        for (int j = 0; j < d; ++j) {
            const int ic = a * d + j;
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx)
                    out.at(0, (y * s.w + xx) * anchors + a, j) = x->value.at(ic, y, xx);
        }
    auto node = make_node(std::move(out));
    node->parents = {x};
    node->requires_grad = x->requires_grad;
    if (node->requires_grad)
        node->backprop = [d, anchors, s](Node<T>& self) {
            Tensor<T>& g = self.parents[0]->ensure_grad();
            for (int a = 0; a < anchors; ++a)
                for (int j = 0; j < d; ++j) {
                    const int ic = a * d + j;
                    for (int y = 0; y < s.h; ++y)
                        for (int xx = 0; xx < s.w; ++xx)
                            g.at(ic, y, xx) += self.grad.at(0, (y * s.w + xx) * anchors + a, j);
                }
        };
    return node;
}

/// Stacks row blocks (1, Ni, d) into (1, sum Ni, d).
template <typename T>
Value<T> concat_rows(const std::vector<Value<T>>& xs) {
    if (xs.empty()) throw ValidationError("concat_rows of zero tensors");
    const int d = xs[0]->value.width();
    int rows = 0;
    for (const auto& x : xs) {
        if (x->value.channels() != 1 || x->value.width() != d)
            throw ShapeError("concat_rows layout mismatch");
        rows += x->value.height();
    }
    Tensor<T> out(1, rows, d);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), out.data() + off);
        off += x->value.size();
    }
    auto node = make_node(std::move(out));
    node->parents = xs;
    node->requires_grad = any_requires_grad(xs);
    if (node->requires_grad)
        node->backprop = [](Node<T>& self) {
            std::size_t off = 0;
            for (auto& p : self.parents) {
                if (p->requires_grad) {
                    Tensor<T>& g = p->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
                }
                off += p->value.size();
            }
        };
    return node;
}

} // namespace srdet
