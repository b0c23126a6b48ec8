#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "srdet/data/sample.hpp"
#include "srdet/image/png_io.hpp"

namespace srdet {

namespace detail {

struct Rgb {
    float r, g, b;
};

inline void put_pixel(TensorF& img, int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
    img.at(0, y, x) = c.r;
    img.at(1, y, x) = c.g;
    img.at(2, y, x) = c.b;
}

inline void draw_rect(TensorF& img, const Box& box, Rgb c, int thickness = 2) {
    const int x0 = static_cast<int>(box.xmin), x1 = static_cast<int>(box.xmax) - 1;
    const int y0 = static_cast<int>(box.ymin), y1 = static_cast<int>(box.ymax) - 1;
    for (int t = 0; t < thickness; ++t)
        for (int x = x0; x <= x1; ++x) {
            put_pixel(img, x, y0 + t, c);
            put_pixel(img, x, y1 - t, c);
        }
    for (int t = 0; t < thickness; ++t)
        for (int y = y0; y <= y1; ++y) {
            put_pixel(img, x0 + t, y, c);
            put_pixel(img, x1 - t, y, c);
        }
}

/// 3x5 glyphs for score labels (digits and the decimal point).
inline const std::array<std::uint16_t, 11>& glyph_table() {
    // Each glyph is 5 rows x 3 bits, packed top row first.
    static const std::array<std::uint16_t, 11> glyphs = {
        0b111101101101111, // 0
        0b010110010010111, // 1
        0b111001111100111, // 2
        0b111001111001111, // 3
        0b101101111001001, // 4
        0b111100111001111, // 5
        0b111100111101111, // 6
        0b111001010010010, // 7
        0b111101111101111, // 8
        0b111101111001111, // 9
        0b000000000000010, // .
    };
    return glyphs;
}

inline void draw_text(TensorF& img, int x, int y, const std::string& text, Rgb c) {
    for (char ch : text) {
        int gi = -1;
        if (ch >= '0' && ch <= '9') gi = ch - '0';
        else if (ch == '.') gi = 10;
        if (gi >= 0) {
            const std::uint16_t bits = glyph_table()[gi];
            for (int ry = 0; ry < 5; ++ry)
                for (int rx = 0; rx < 3; ++rx)
                    if (bits >> ((4 - ry) * 3 + (2 - rx)) & 1) put_pixel(img, x + rx, y + ry, c);
        }
        x += 4;
    }
}

} // namespace detail

/// Renders predictions (red, with score labels) and ground truths (green)
/// onto a copy of the image and writes it as a PNG. Output dimensions equal
/// the input; bytes are deterministic for fixed inputs.
inline void render_detections(const TensorF& image, const std::vector<Detection>& detections,
                              const std::vector<Box>& ground_truths,
                              const std::filesystem::path& output_path) {
    TensorF canvas = image;
    const detail::Rgb gt_color{0.1f, 0.85f, 0.2f};
    const detail::Rgb det_color{1.0f, 0.25f, 0.2f};
    for (const Box& gt : ground_truths) detail::draw_rect(canvas, gt, gt_color, 1);
    for (const Detection& d : detections) {
        detail::draw_rect(canvas, d.box, det_color, 2);
        char label[16];
        std::snprintf(label, sizeof(label), "%.2f", d.score);
        detail::draw_text(canvas, static_cast<int>(d.box.xmin) + 2,
                          static_cast<int>(d.box.ymin) + 2, label, det_color);
    }
    write_png(output_path, canvas);
}

} // namespace srdet
