#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "srdet/core/errors.hpp"

namespace srdet {

/// Axis-aligned rectangle in pixel coordinates.
struct Box {
    double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (xmin + xmax); }
    double cy() const { return 0.5 * (ymin + ymax); }

    bool valid() const {
        return xmax > xmin && ymax > ymin && std::isfinite(xmin) && std::isfinite(ymin) &&
               std::isfinite(xmax) && std::isfinite(ymax);
    }

    Box clipped(double w, double h) const {
        return Box{std::clamp(xmin, 0.0, w), std::clamp(ymin, 0.0, h), std::clamp(xmax, 0.0, w),
                   std::clamp(ymax, 0.0, h)};
    }
};

struct Detection {
    Box box;
    int class_id = 0;
    double score = 0.0;
};

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw ValidationError("iou on a degenerate box");
    const double ix = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
    const double iy = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

/// Fixed reference box in normalized [0,1] center form, tied to one cell of
/// one pyramid map.
struct PriorBox {
    double cx = 0, cy = 0, w = 0, h = 0;
    int map_index = 0;
};

/// Offset decode: center shifted by v0*t*prior_size, size scaled by
/// exp(v1*t). Output in pixel corner form.
inline Box decode_box(const std::array<double, 4>& t, const PriorBox& p, double var_center,
                      double var_size, double img_w, double img_h) {
    for (double v : t)
        if (!std::isfinite(v)) throw ValidationError("non-finite box offsets");
    const double cx = p.cx + var_center * t[0] * p.w;
    const double cy = p.cy + var_center * t[1] * p.h;
    const double w = p.w * std::exp(var_size * t[2]);
    const double h = p.h * std::exp(var_size * t[3]);
    return Box{(cx - 0.5 * w) * img_w, (cy - 0.5 * h) * img_h, (cx + 0.5 * w) * img_w,
               (cy + 0.5 * h) * img_h};
}

/// Algebraic inverse of decode_box; the regression target for a matched
/// ground-truth box.
inline std::array<double, 4> encode_box(const Box& gt, const PriorBox& p, double var_center,
                                        double var_size, double img_w, double img_h) {
    const double gcx = gt.cx() / img_w;
    const double gcy = gt.cy() / img_h;
    const double gw = gt.width() / img_w;
    const double gh = gt.height() / img_h;
    return {(gcx - p.cx) / (var_center * p.w), (gcy - p.cy) / (var_center * p.h),
            std::log(gw / p.w) / var_size, std::log(gh / p.h) / var_size};
}

/// Prior in pixel corner form; used for IoU against ground truth.
inline Box prior_to_box(const PriorBox& p, double img_w, double img_h) {
    return Box{(p.cx - 0.5 * p.w) * img_w, (p.cy - 0.5 * p.h) * img_h, (p.cx + 0.5 * p.w) * img_w,
               (p.cy + 0.5 * p.h) * img_h};
}

} // namespace srdet
