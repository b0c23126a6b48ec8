#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "srdet/det/box.hpp"

namespace srdet {

/// Anchor layout shared by prior generation and the detection heads.
struct AnchorConfig {
    double scale_min = 0.1;
    double scale_max = 0.9;
    std::vector<double> aspect_ratios = {1.0, 2.0, 0.5};
    /// Extra 1:1 anchor at sqrt(s_k * s_{k+1}).
    bool geometric_mean_anchor = true;

    int anchors_per_cell() const {
        return static_cast<int>(aspect_ratios.size()) + (geometric_mean_anchor ? 1 : 0);
    }

    /// Linear scale ramp across maps; s_{m} extends to 1.0 for the extra anchor.
    double scale_for_map(int k, int num_maps) const {
        if (num_maps <= 1) return scale_min;
        return scale_min + (scale_max - scale_min) * k / (num_maps - 1);
    }

    /// (w,h) pairs for one map, in fixed order: aspect ratios then the
    /// geometric-mean anchor.
    std::vector<std::pair<double, double>> anchor_sizes(int k, int num_maps) const {
        const double s = scale_for_map(k, num_maps);
        std::vector<std::pair<double, double>> out;
        out.reserve(anchors_per_cell());
        for (double ar : aspect_ratios) {
            const double r = std::sqrt(ar);
            out.emplace_back(s * r, s / r);
        }
        if (geometric_mean_anchor) {
            const double next = k + 1 < num_maps ? scale_for_map(k + 1, num_maps) : 1.0;
            const double sp = std::sqrt(s * next);
            out.emplace_back(sp, sp);
        }
        return out;
    }
};

/// Per-cell anchors over every pyramid map, clipped to the unit square.
/// Order: map, then row, then column, then anchor; detection heads flatten
/// their outputs in the same order.
inline std::vector<PriorBox> generate_priors(const AnchorConfig& cfg,
                                             const std::vector<std::pair<int, int>>& map_sizes) {
    if (map_sizes.empty()) throw ValidationError("generate_priors: empty map list");
    for (std::size_t k = 1; k < map_sizes.size(); ++k)
        if (map_sizes[k].first >= map_sizes[k - 1].first ||
            map_sizes[k].second >= map_sizes[k - 1].second)
            throw ValidationError("generate_priors: map sizes must be strictly decreasing");

    const int m = static_cast<int>(map_sizes.size());
    std::vector<PriorBox> priors;
    for (int k = 0; k < m; ++k) {
        const auto [mh, mw] = map_sizes[k];
        const auto sizes = cfg.anchor_sizes(k, m);
        for (int y = 0; y < mh; ++y)
            for (int x = 0; x < mw; ++x)
                for (const auto& [w, h] : sizes) {
                    const double cx = (x + 0.5) / mw;
                    const double cy = (y + 0.5) / mh;
                    // Clip in corner form, convert back to center form.
                    const double x0 = std::clamp(cx - 0.5 * w, 0.0, 1.0);
                    const double y0 = std::clamp(cy - 0.5 * h, 0.0, 1.0);
                    const double x1 = std::clamp(cx + 0.5 * w, 0.0, 1.0);
                    const double y1 = std::clamp(cy + 0.5 * h, 0.0, 1.0);
                    priors.push_back(
                        PriorBox{0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0, k});
                }
    }
    return priors;
}

} // namespace srdet
