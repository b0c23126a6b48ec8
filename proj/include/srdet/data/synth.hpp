#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "srdet/core/rng.hpp"
#include "srdet/data/sample.hpp"

namespace srdet {

/// Procedural ship-scene generator: textured water background with
/// elongated high-contrast hulls. Desk-scale stand-in for a real maritime
/// dataset; fully deterministic per seed.
struct SynthConfig {
    int image_count = 60;
    int canvas = 256;
    int ships_min = 1;
    int ships_max = 3;
    /// Hull length range as a fraction of the canvas.
    double ship_len_min = 0.14;
    double ship_len_max = 0.32;
    int noise_octaves = 3;
    /// Per-pixel Gaussian sensor noise; sets an irreducible reconstruction
    /// floor of about sigma*sqrt(2/pi) on L1 metrics.
    double noise_sigma = 0.008;
    std::uint64_t seed = 1;

    void validate() const {
        if (image_count < 1 || canvas < 32) throw ValidationError("synth: bad count/canvas");
        if (ships_min < 1 || ships_max < ships_min) throw ValidationError("synth: bad ship range");
        if (!(ship_len_min > 0 && ship_len_max >= ship_len_min && ship_len_max <= 0.9))
            throw ValidationError("synth: bad ship size range");
    }
};

namespace detail {

/// Smooth value noise in [0,1]: bilinear interpolation of a random lattice.
inline std::vector<float> value_noise(int size, int cells, Rng& rng) {
    const int n = cells + 2;
    std::vector<double> lattice(static_cast<std::size_t>(n) * n);
    for (auto& v : lattice) v = rng.uniform();
    std::vector<float> out(static_cast<std::size_t>(size) * size);
    const double step = static_cast<double>(cells) / size;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double fy = y * step, fx = x * step;
            const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
            const double ty = fy - iy, tx = fx - ix;
            const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
            const double v00 = lattice[iy * n + ix], v01 = lattice[iy * n + ix + 1];
            const double v10 = lattice[(iy + 1) * n + ix], v11 = lattice[(iy + 1) * n + ix + 1];
            out[static_cast<std::size_t>(y) * size + x] = static_cast<float>(
                v00 * (1 - sy) * (1 - sx) + v01 * (1 - sy) * sx + v10 * sy * (1 - sx) +
                v11 * sy * sx);
        }
    return out;
}

struct ShipShape {
    double cx, cy;      // hull center, pixels
    double len, width;  // semi-axes
    double cos_t, sin_t;

    /// Point-in-hull test: an ellipse with a pointed bow (slight taper).
    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double u = dx * cos_t + dy * sin_t;   // along length
        const double v = -dx * sin_t + dy * cos_t;  // across width
        const double taper = 1.0 - 0.35 * std::max(0.0, u / len);
        const double a = u / len, b = v / (width * taper);
        return a * a + b * b <= 1.0;
    }
};

} // namespace detail

/// Generates samples at canvas resolution. Ground-truth boxes are the tight
/// bounding rectangles of the painted hull masks.
inline RawDataset synth_dataset(const SynthConfig& cfg, const std::string& split = "train") {
    cfg.validate();
    const Rng root(cfg.seed);
    RawDataset ds;
    ds.class_names = {"ship"};
    ds.split = split;

    const std::uint64_t split_key = split == "train" ? 0x7261696eULL : 0x74657374ULL;
    for (int idx = 0; idx < cfg.image_count; ++idx) {
        Rng rng = root.split(split_key).split(static_cast<std::uint64_t>(idx));
        const int S = cfg.canvas;
        RawSample sample;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s_%05d", split.c_str(), idx);
        sample.id = idbuf;
        sample.image = TensorF(3, S, S);

        // Water: layered smooth noise over a blue-green base.
        std::vector<std::vector<float>> octaves;
        int cells = 4;
        for (int o = 0; o < cfg.noise_octaves; ++o) {
            octaves.push_back(detail::value_noise(S, cells, rng));
            cells *= 3;
        }
        const float base_r = static_cast<float>(rng.uniform(0.05, 0.12));
        const float base_g = static_cast<float>(rng.uniform(0.18, 0.30));
        const float base_b = static_cast<float>(rng.uniform(0.35, 0.50));
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                double n = 0.0, wsum = 0.0, w = 1.0;
                for (const auto& oct : octaves) {
                    n += w * oct[static_cast<std::size_t>(y) * S + x];
                    wsum += w;
                    w *= 0.55;
                }
                const float mod = static_cast<float>(0.16 * (n / wsum - 0.5));
                sample.image.at(0, y, x) = base_r + 0.5f * mod;
                sample.image.at(1, y, x) = base_g + mod;
                sample.image.at(2, y, x) = base_b + mod;
            }

        // Ships with bounded placement retries; overlaps are rejected.
        const int want = rng.uniform_int(cfg.ships_min, cfg.ships_max);
        std::vector<Box> placed;
        for (int s = 0; s < want; ++s) {
            bool done = false;
            for (int attempt = 0; attempt < 25 && !done; ++attempt) {
                detail::ShipShape ship;
                ship.len = 0.5 * S * rng.uniform(cfg.ship_len_min, cfg.ship_len_max);
                ship.width = ship.len * rng.uniform(0.22, 0.4);
                const double theta = rng.uniform(0.0, 3.14159265358979);
                ship.cos_t = std::cos(theta);
                ship.sin_t = std::sin(theta);
                const double margin = ship.len + 2;
                ship.cx = rng.uniform(margin, S - margin);
                ship.cy = rng.uniform(margin, S - margin);

                int x0 = S, y0 = S, x1 = -1, y1 = -1;
                for (int y = std::max(0, static_cast<int>(ship.cy - margin));
                     y < std::min(S, static_cast<int>(ship.cy + margin) + 1); ++y)
                    for (int x = std::max(0, static_cast<int>(ship.cx - margin));
                         x < std::min(S, static_cast<int>(ship.cx + margin) + 1); ++x)
                        if (ship.contains(x + 0.5, y + 0.5)) {
                            x0 = std::min(x0, x);
                            y0 = std::min(y0, y);
                            x1 = std::max(x1, x);
                            y1 = std::max(y1, y);
                        }
                if (x1 < 0 || x1 - x0 < 3 || y1 - y0 < 3) continue;
                Box box{static_cast<double>(x0), static_cast<double>(y0),
                        static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
                bool overlaps = false;
                for (const Box& other : placed)
                    if (iou(box, other) > 0.05) overlaps = true;
                if (overlaps) continue;

                // Paint: bright hull with a darker deck stripe.
                const float hull = static_cast<float>(rng.uniform(0.72, 0.92));
                const float deck = static_cast<float>(rng.uniform(0.30, 0.45));
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x)
                        if (ship.contains(x + 0.5, y + 0.5)) {
                            const double dx = x + 0.5 - ship.cx, dy = y + 0.5 - ship.cy;
                            const double v = -dx * ship.sin_t + dy * ship.cos_t;
                            const float shade =
                                std::fabs(v) < 0.25 * ship.width ? deck : hull;
                            sample.image.at(0, y, x) = shade;
                            sample.image.at(1, y, x) = shade;
                            sample.image.at(2, y, x) = shade * 0.97f;
                        }
                placed.push_back(box);
                sample.boxes.push_back(box);
                sample.class_ids.push_back(0);
                done = true;
            }
            // Infeasible placement after the retry budget: fewer ships.
        }

        // Per-pixel sensor noise.
        if (cfg.noise_sigma > 0.0)
            for (auto& v : sample.image)
                v = std::clamp(v + static_cast<float>(rng.normal(0.0, cfg.noise_sigma)), 0.0f, 1.0f);

        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

} // namespace srdet
