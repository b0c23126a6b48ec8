#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "srdet/data/pairs.hpp"
#include "srdet/data/synth.hpp"
#include "srdet/data/voc.hpp"
#include "srdet/image/draw.hpp"

using namespace srdet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("srdet_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SynthConfig small_synth(int count = 6) {
    SynthConfig cfg;
    cfg.image_count = count;
    cfg.canvas = 96;
    cfg.seed = 11;
    return cfg;
}

} // namespace

TEST(Synth, DeterministicPerSeed) {
    const RawDataset a = synth_dataset(small_synth());
    const RawDataset b = synth_dataset(small_synth());
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        ASSERT_EQ(a.samples[i].id, b.samples[i].id);
        ASSERT_EQ(a.samples[i].boxes.size(), b.samples[i].boxes.size());
        for (std::size_t j = 0; j < a.samples[i].image.size(); ++j)
            ASSERT_EQ(a.samples[i].image[j], b.samples[i].image[j]);
    }
    SynthConfig other = small_synth();
    other.seed = 12;
    const RawDataset c = synth_dataset(other);
    bool any_diff = false;
    for (std::size_t j = 0; j < a.samples[0].image.size(); ++j)
        any_diff |= a.samples[0].image[j] != c.samples[0].image[j];
    EXPECT_TRUE(any_diff);
}

TEST(Synth, BoxCountWithinConfiguredRange) {
    SynthConfig cfg = small_synth(50);
    cfg.ships_min = 1;
    cfg.ships_max = 3;
    const RawDataset ds = synth_dataset(cfg);
    ASSERT_EQ(ds.samples.size(), 50u);
    for (const auto& s : ds.samples) {
        EXPECT_GE(s.boxes.size(), 1u);
        EXPECT_LE(s.boxes.size(), 3u);
        for (const Box& b : s.boxes) {
            EXPECT_TRUE(b.valid());
            EXPECT_GE(b.xmin, 0);
            EXPECT_LE(b.xmax, cfg.canvas);
        }
    }
}

TEST(Synth, BoxesAreTightAroundPaintedMask) {
    // Single ship per image so the hull mask can be recovered from the
    // image by color: hulls are near-gray and bright, water is blue-green.
    SynthConfig cfg = small_synth(12);
    cfg.ships_min = cfg.ships_max = 1;
    const RawDataset ds = synth_dataset(cfg);
    for (const auto& s : ds.samples) {
        ASSERT_EQ(s.boxes.size(), 1u);
        int x0 = cfg.canvas, y0 = cfg.canvas, x1 = -1, y1 = -1;
        for (int y = 0; y < cfg.canvas; ++y)
            for (int x = 0; x < cfg.canvas; ++x)
                if (s.image.at(0, y, x) > 0.24f) {
                    x0 = std::min(x0, x);
                    y0 = std::min(y0, y);
                    x1 = std::max(x1, x);
                    y1 = std::max(y1, y);
                }
        ASSERT_GE(x1, 0) << s.id;
        EXPECT_EQ(s.boxes[0].xmin, x0);
        EXPECT_EQ(s.boxes[0].ymin, y0);
        EXPECT_EQ(s.boxes[0].xmax, x1 + 1);
        EXPECT_EQ(s.boxes[0].ymax, y1 + 1);
    }
}

TEST(Voc, WriteReloadRoundTrip) {
    const fs::path root = temp_dir("voc_roundtrip");
    const RawDataset ds = synth_dataset(small_synth());
    write_voc_dataset(ds, root);

    VocLoadReport report;
    const RawDataset back = load_voc_raw(root, "train", ds.class_names, &report);
    EXPECT_EQ(report.missing_annotations, 0);
    EXPECT_EQ(report.dropped_boxes, 0);
    ASSERT_EQ(back.samples.size(), ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
        ASSERT_EQ(back.samples[i].boxes.size(), ds.samples[i].boxes.size());
        for (std::size_t j = 0; j < ds.samples[i].boxes.size(); ++j) {
            EXPECT_EQ(back.samples[i].boxes[j].xmin, ds.samples[i].boxes[j].xmin);
            EXPECT_EQ(back.samples[i].boxes[j].ymin, ds.samples[i].boxes[j].ymin);
            EXPECT_EQ(back.samples[i].boxes[j].xmax, ds.samples[i].boxes[j].xmax);
            EXPECT_EQ(back.samples[i].boxes[j].ymax, ds.samples[i].boxes[j].ymax);
        }
    }
    fs::remove_all(root);
}

TEST(Voc, MissingAnnotationSkippedAndBoxesClipped) {
    const fs::path root = temp_dir("voc_edge");
    RawDataset ds = synth_dataset(small_synth(3));
    // Out-of-bounds box on sample 0, zero-area on sample 1.
    ds.samples[0].boxes[0] = Box{-10, -10, 40, 2000};
    ds.samples[1].boxes[0] = Box{5, 5, 5, 5};
    write_voc_dataset(ds, root);
    fs::remove(root / "annotations" / (ds.samples[2].id + ".xml"));

    VocLoadReport report;
    const RawDataset back = load_voc_raw(root, "train", ds.class_names, &report);
    EXPECT_EQ(report.missing_annotations, 1);
    ASSERT_EQ(back.samples.size(), 2u);
    EXPECT_EQ(report.skipped_ids[0], ds.samples[2].id);
    EXPECT_GE(report.clipped_boxes, 1);
    EXPECT_GE(report.dropped_boxes, 1);
    // Clipped to bounds.
    EXPECT_EQ(back.samples[0].boxes[0].xmin, 0.0);
    EXPECT_EQ(back.samples[0].boxes[0].ymax, 96.0);
    fs::remove_all(root);
}

TEST(Voc, EmptyAnnotationGivesZeroBoxes) {
    const fs::path root = temp_dir("voc_empty");
    RawDataset ds = synth_dataset(small_synth(1));
    ds.samples[0].boxes.clear();
    ds.samples[0].class_ids.clear();
    write_voc_dataset(ds, root);
    const RawDataset back = load_voc_raw(root, "train", ds.class_names);
    ASSERT_EQ(back.samples.size(), 1u);
    EXPECT_TRUE(back.samples[0].boxes.empty());
    fs::remove_all(root);
}

TEST(Voc, UnreadableImageNamesPath) {
    const fs::path root = temp_dir("voc_badimg");
    RawDataset ds = synth_dataset(small_synth(1));
    write_voc_dataset(ds, root);
    std::ofstream(root / "images" / (ds.samples[0].id + ".png"), std::ios::trunc) << "not a png";
    try {
        load_voc_raw(root, "train", ds.class_names);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find(ds.samples[0].id), std::string::npos);
    }
    fs::remove_all(root);
}

TEST(Pairs, SizesAndBoxScaling) {
    PairConfig cfg; // 1024 -> 512/128, alpha 4
    RawSample raw;
    raw.id = "t";
    raw.image = TensorF(3, 1024, 1024, 0.25f);
    raw.boxes = {Box{100, 100, 300, 300}};
    raw.class_ids = {0};
    const Sample s = make_pair(raw, cfg);
    EXPECT_EQ(s.hr_image.shape(), (Shape{3, 512, 512}));
    EXPECT_EQ(s.lr_image.shape(), (Shape{3, 128, 128}));
    EXPECT_DOUBLE_EQ(s.boxes[0].xmin, 50.0);
    EXPECT_DOUBLE_EQ(s.boxes[0].ymax, 150.0);
}

TEST(Pairs, ConstantImageStaysConstant) {
    PairConfig cfg;
    cfg.normalize_size = 128;
    RawSample raw;
    raw.id = "const";
    raw.image = TensorF(3, 200, 160, 0.4f);
    const Sample s = make_pair(raw, cfg);
    for (float v : s.hr_image) EXPECT_NEAR(v, 0.4f, 1e-6f);
    for (float v : s.lr_image) EXPECT_NEAR(v, 0.4f, 1e-6f);
}

TEST(Pairs, TinyBoxesDroppedAndCounted) {
    PairConfig cfg;
    cfg.normalize_size = 256; // HR 128: scale original 512 -> 1/4
    RawSample raw;
    raw.id = "drop";
    raw.image = TensorF(3, 512, 512, 0.5f);
    raw.boxes = {Box{0, 0, 6, 6}, Box{100, 100, 200, 200}};
    raw.class_ids = {0, 0};
    int dropped = 0;
    const Sample s = make_pair(raw, cfg, &dropped);
    EXPECT_EQ(dropped, 1);
    ASSERT_EQ(s.boxes.size(), 1u);
}

TEST(Pairs, BicubicUpsampledLrStaysAbovePsnrFloor) {
    SynthConfig scfg = small_synth(4);
    scfg.canvas = 128;
    const RawDataset raw = synth_dataset(scfg);
    PairConfig cfg;
    cfg.normalize_size = 128; // HR 64, LR 16
    for (const auto& rs : raw.samples) {
        const Sample s = make_pair(rs, cfg);
        const TensorF up = bicubic_resize(s.lr_image, 4.0);
        double mse = 0.0;
        for (std::size_t i = 0; i < up.size(); ++i) {
            const double d = up[i] - s.hr_image[i];
            mse += d * d;
        }
        mse /= up.size();
        const double psnr = 10.0 * std::log10(1.0 / mse);
        EXPECT_GT(psnr, 10.0);
        EXPECT_TRUE(std::isfinite(psnr));
    }
}

TEST(Augment, FlipFormulasAndInvolution) {
    EXPECT_EQ(detail::hflip_box(Box{10, 20, 30, 40}, 512).xmin, 482.0);
    EXPECT_EQ(detail::hflip_box(Box{10, 20, 30, 40}, 512).xmax, 502.0);
    const Box twice = detail::hflip_box(detail::hflip_box(Box{10, 20, 30, 40}, 512), 512);
    EXPECT_EQ(twice.xmin, 10.0);
    EXPECT_EQ(twice.xmax, 30.0);

    TensorF img(3, 8, 8);
    Rng rng(5);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    const TensorF back = flip_horizontal(flip_horizontal(img));
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back[i], img[i]);
}

TEST(Augment, RotationBoxMatchesCornerHull) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const double H = 64;
        Box b{static_cast<double>(rng.uniform_int(0, 40)), static_cast<double>(rng.uniform_int(0, 40)), 0, 0};
        b.xmax = b.xmin + rng.uniform_int(1, 20);
        b.ymax = b.ymin + rng.uniform_int(1, 20);
        const Box got = detail::rot90cw_box(b, H);
        // Hull of the four rotated corners (x,y) -> (H-y, x).
        double xs[4] = {H - b.ymin, H - b.ymin, H - b.ymax, H - b.ymax};
        double ys[4] = {b.xmin, b.xmax, b.xmin, b.xmax};
        EXPECT_EQ(got.xmin, *std::min_element(xs, xs + 4));
        EXPECT_EQ(got.xmax, *std::max_element(xs, xs + 4));
        EXPECT_EQ(got.ymin, *std::min_element(ys, ys + 4));
        EXPECT_EQ(got.ymax, *std::max_element(ys, ys + 4));
    }
}

TEST(Augment, RotatedPixelsFollowBoxes) {
    // A bright rectangle region must stay inside its transformed box.
    TensorF img(3, 16, 16, 0.0f);
    const Box box{4, 6, 9, 12};
    for (int y = 6; y < 12; ++y)
        for (int x = 4; x < 9; ++x) img.at(0, y, x) = 1.0f;
    const TensorF rot = rotate90_cw(img);
    const Box rbox = detail::rot90cw_box(box, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            if (rot.at(0, y, x) > 0.5f) {
                EXPECT_GE(x + 0.5, rbox.xmin);
                EXPECT_LE(x + 0.5, rbox.xmax);
                EXPECT_GE(y + 0.5, rbox.ymin);
                EXPECT_LE(y + 0.5, rbox.ymax);
            }
}

TEST(Augment, PreservesBoxCountAndArea) {
    SynthConfig scfg = small_synth(6);
    scfg.canvas = 128;
    const RawDataset raw = synth_dataset(scfg);
    PairConfig pcfg;
    pcfg.normalize_size = 128;
    Rng rng(9);
    for (const auto& rs : raw.samples) {
        const Sample s = make_pair(rs, pcfg);
        for (int rep = 0; rep < 4; ++rep) {
            Rng stream = rng.split(rep);
            const Sample aug = augment(s, stream);
            ASSERT_EQ(aug.boxes.size(), s.boxes.size());
            for (std::size_t i = 0; i < s.boxes.size(); ++i)
                EXPECT_DOUBLE_EQ(aug.boxes[i].area(), s.boxes[i].area());
            aug.validate(pcfg.alpha);
        }
    }
}

TEST(PngIo, RoundTripAndDeterminism) {
    const fs::path root = temp_dir("png");
    Rng rng(7);
    TensorF img(3, 20, 24);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    write_png(root / "a.png", img);
    write_png(root / "b.png", img);

    std::ifstream fa(root / "a.png", std::ios::binary), fb(root / "b.png", std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    EXPECT_EQ(ba, bb);

    const TensorF back = read_png(root / "a.png");
    ASSERT_EQ(back.shape(), img.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
        EXPECT_NEAR(back[i], img[i], 0.5f / 255.0f + 1e-6f);
    fs::remove_all(root);
}

TEST(Render, DrawsBoxesDeterministically) {
    const fs::path root = temp_dir("render");
    TensorF img(3, 32, 32, 0.3f);
    const std::vector<Detection> dets = {Detection{Box{4, 4, 18, 14}, 0, 0.87}};
    const std::vector<Box> gts = {Box{5, 5, 17, 13}};
    render_detections(img, dets, gts, root / "r1.png");
    render_detections(img, dets, gts, root / "r2.png");
    std::ifstream f1(root / "r1.png", std::ios::binary), f2(root / "r2.png", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);

    const TensorF rendered = read_png(root / "r1.png");
    EXPECT_EQ(rendered.shape(), img.shape());
    // Zero detections still renders the ground truth.
    render_detections(img, {}, gts, root / "gt_only.png");
    const TensorF gt_only = read_png(root / "gt_only.png");
    EXPECT_GT(gt_only.at(1, 5, 8), 0.5f);
    fs::remove_all(root);
}
