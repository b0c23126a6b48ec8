#pragma once

#include "srdet/core/resample.hpp"
#include "srdet/core/rng.hpp"
#include "srdet/data/sample.hpp"

namespace srdet {

/// HR/LR pair recipe: originals are stretched to normalize_size, then
/// downsampled 2x for the HR image and 2*alpha x for the LR image, so the
/// default 1024 canvas lands on the 512/128 pair sizes.
struct PairConfig {
    int normalize_size = 1024;
    int alpha = 4;
    /// Boxes thinner than this (in HR pixels) after rescaling are dropped.
    double min_box_px = 2.0;

    int hr_size() const { return normalize_size / 2; }
    int lr_size() const { return normalize_size / (2 * alpha); }

    void validate() const {
        if (alpha < 1) throw ValidationError("pair alpha must be >= 1");
        if (normalize_size % (2 * alpha) != 0)
            throw ValidationError("normalize size must be divisible by 2*alpha");
        if (lr_size() < 8) throw ValidationError("pair recipe yields an LR image below 8px");
    }
};

/// Builds one HR/LR sample from an original-resolution image. Boxes are
/// rescaled into HR coordinates; collapsed boxes are dropped and counted.
inline Sample make_pair(const RawSample& raw, const PairConfig& cfg, int* dropped = nullptr) {
    cfg.validate();
    const int n = cfg.normalize_size;
    if (raw.image.height() < 2 * cfg.alpha || raw.image.width() < 2 * cfg.alpha)
        throw ValidationError("original too small for pair generation: " + raw.id);

    const TensorF normalized = (raw.image.height() == n && raw.image.width() == n)
                                   ? raw.image
                                   : bicubic_resize_to(raw.image, n, n);
    Sample out;
    out.id = raw.id;
    out.hr_image = bicubic_resize_to(normalized, cfg.hr_size(), cfg.hr_size());
    out.lr_image = bicubic_resize_to(normalized, cfg.lr_size(), cfg.lr_size());

    const double sx = static_cast<double>(cfg.hr_size()) / raw.image.width();
    const double sy = static_cast<double>(cfg.hr_size()) / raw.image.height();
    for (std::size_t i = 0; i < raw.boxes.size(); ++i) {
        const Box& b = raw.boxes[i];
        Box scaled{b.xmin * sx, b.ymin * sy, b.xmax * sx, b.ymax * sy};
        scaled = scaled.clipped(cfg.hr_size(), cfg.hr_size());
        if (!scaled.valid() || scaled.width() < cfg.min_box_px ||
            scaled.height() < cfg.min_box_px) {
            if (dropped) ++*dropped;
            continue;
        }
        out.boxes.push_back(scaled);
        out.class_ids.push_back(raw.class_ids[i]);
    }
    out.validate(cfg.alpha);
    return out;
}

inline Dataset make_pairs(const RawDataset& raw, const PairConfig& cfg, int* dropped = nullptr) {
    Dataset ds;
    ds.class_names = raw.class_names;
    ds.split = raw.split;
    ds.alpha = cfg.alpha;
    for (const RawSample& s : raw.samples) ds.samples.push_back(make_pair(s, cfg, dropped));
    return ds;
}

namespace detail {

inline Box hflip_box(const Box& b, double w) { return Box{w - b.xmax, b.ymin, w - b.xmin, b.ymax}; }
inline Box vflip_box(const Box& b, double h) { return Box{b.xmin, h - b.ymax, b.xmax, h - b.ymin}; }

/// Continuous-coordinate 90-degree clockwise rotation on an h-tall image:
/// (x, y) -> (h - y, x); a box maps to the hull of its rotated corners.
inline Box rot90cw_box(const Box& b, double h) { return Box{h - b.ymax, b.xmin, h - b.ymin, b.xmax}; }

} // namespace detail

/// Random horizontal flip, vertical flip and k*90-degree rotation, each
/// applied with probability 0.5 (k uniform in {1,2,3}), identically to the
/// HR image, the LR image and the boxes. Exact on boxes; no box is dropped.
inline Sample augment(const Sample& in, Rng& rng) {
    const bool do_h = rng.bernoulli(0.5);
    const bool do_v = rng.bernoulli(0.5);
    const bool do_r = rng.bernoulli(0.5);
    const int k = do_r ? rng.uniform_int(1, 3) : 0;

    Sample out = in;
    if (do_h) {
        out.hr_image = flip_horizontal(out.hr_image);
        out.lr_image = flip_horizontal(out.lr_image);
        for (Box& b : out.boxes) b = detail::hflip_box(b, out.hr_image.width());
    }
    if (do_v) {
        out.hr_image = flip_vertical(out.hr_image);
        out.lr_image = flip_vertical(out.lr_image);
        for (Box& b : out.boxes) b = detail::vflip_box(b, out.hr_image.height());
    }
    for (int i = 0; i < k; ++i) {
        const double h = out.hr_image.height();
        out.hr_image = rotate90_cw(out.hr_image);
        out.lr_image = rotate90_cw(out.lr_image);
        for (Box& b : out.boxes) b = detail::rot90cw_box(b, h);
    }
    return out;
}

} // namespace srdet
