#include <gtest/gtest.h>

#include "srdet/det/detector.hpp"

using namespace srdet;

namespace {

/// Reduced plan: same five stages and two ports as the full VGG-16 layout,
/// thin channels, four pyramid maps for 64x64 inputs.
DetectorConfig tiny_det_config() {
    DetectorConfig cfg;
    cfg.stages = {{1, 8}, {1, 12}, {2, 16}, {2, 24}, {2, 24}};
    cfg.encoder_channels = {24, 24};
    cfg.head_maps = 4;
    cfg.sr_channels = 8;
    cfg.num_classes = 1;
    return cfg;
}

TensorF random_image(int c, int h, int w, Rng& rng) {
    TensorF img(c, h, w);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    return img;
}

} // namespace

TEST(Detector, AdaptFeaturesShapesAndZeroInit) {
    DetectorConfig cfg = tiny_det_config();
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(1);
    det.init_params(store, rng);
    det.init_adapter_params(store);

    Graph<float> g(store);
    auto f_lr = g.input(random_image(8, 16, 16, rng));
    auto f_hr = g.input(random_image(8, 64, 64, rng));
    auto adapted = det.adapt_features(g, f_lr, f_hr);
    EXPECT_EQ(adapted.f_lr_ssd->value.shape(), (Shape{16, 16, 16}));
    EXPECT_EQ(adapted.f_hr_ssd->value.shape(), (Shape{8, 64, 64}));
    // Zero-initialized transition convs: injection starts as a no-op.
    for (float v : adapted.f_lr_ssd->value) EXPECT_EQ(v, 0.0f);
    for (float v : adapted.f_hr_ssd->value) EXPECT_EQ(v, 0.0f);

    EXPECT_THROW(det.adapt_features(g, g.input(random_image(4, 16, 16, rng)), f_hr), ShapeError);
}

TEST(Detector, BackbonePyramidContract) {
    DetectorConfig cfg = tiny_det_config();
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(2);
    det.init_params(store, rng);
    Graph<float> g(store, false);
    auto maps = det.backbone_forward<float>(g, g.input(random_image(3, 64, 64, rng)), std::nullopt);
    ASSERT_EQ(maps.size(), 4u);
    int prev_h = 1 << 20;
    const int expect_ch[] = {24, 24, 24, 24};
    const int expect_hw[] = {8, 4, 2, 1};
    for (std::size_t i = 0; i < maps.size(); ++i) {
        EXPECT_EQ(maps[i]->value.channels(), expect_ch[i]);
        EXPECT_EQ(maps[i]->value.height(), expect_hw[i]);
        EXPECT_LT(maps[i]->value.height(), prev_h);
        prev_h = maps[i]->value.height();
    }
}

TEST(Detector, SevenMapDefaultCount) {
    // Default-shaped plan with thin channels: a 512 input yields exactly
    // seven maps 64,32,16,8,4,2,1.
    DetectorConfig cfg;
    cfg.stages = {{1, 4}, {1, 4}, {1, 6}, {1, 6}, {1, 6}};
    cfg.encoder_channels = {6, 6, 6, 6, 6};
    cfg.head_maps = 7;
    cfg.sr_channels = 4;
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(3);
    det.init_params(store, rng);
    Graph<float> g(store, false);
    auto maps = det.backbone_forward<float>(g, g.input(random_image(3, 512, 512, rng)), std::nullopt);
    ASSERT_EQ(maps.size(), 7u);
    const int want[] = {64, 32, 16, 8, 4, 2, 1};
    for (int i = 0; i < 7; ++i) {
        EXPECT_EQ(maps[i]->value.height(), want[i]);
        EXPECT_EQ(maps[i]->value.width(), want[i]);
    }
    // Injection ports expect full resolution (stage-1 depth) and quarter
    // resolution (stage-3 depth).
    EXPECT_EQ(cfg.hr_port_channels(), 4);
    EXPECT_EQ(cfg.lr_port_channels(), 6);
}

TEST(Detector, InjectionAbsentEqualsZeroAdapters) {
    DetectorConfig cfg = tiny_det_config();
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(4);
    det.init_params(store, rng);
    det.init_adapter_params(store); // zeros
    TensorF image = random_image(3, 64, 64, rng);

    Graph<float> g1(store, false);
    auto plain = det.backbone_forward<float>(g1, g1.input(image), std::nullopt);

    Graph<float> g2(store, false);
    auto adapted = det.adapt_features(g2, g2.input(random_image(8, 16, 16, rng)),
                                      g2.input(random_image(8, 64, 64, rng)));
    auto injected = det.backbone_forward<float>(g2, g2.input(image), adapted);

    ASSERT_EQ(plain.size(), injected.size());
    for (std::size_t m = 0; m < plain.size(); ++m)
        for (std::size_t i = 0; i < plain[m]->value.size(); ++i)
            ASSERT_EQ(plain[m]->value[i], injected[m]->value[i]);
}

TEST(Detector, InjectionPortShapeMismatchNamed) {
    DetectorConfig cfg = tiny_det_config();
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(5);
    det.init_params(store, rng);
    Graph<float> g(store, false);
    InjectedFeatures<float> bad;
    bad.f_hr_ssd = g.input(random_image(8, 32, 32, rng)); // wrong size and depth
    bad.f_lr_ssd = g.input(random_image(16, 16, 16, rng));
    try {
        det.backbone_forward<float>(g, g.input(random_image(3, 64, 64, rng)), bad);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("hr injection port"), std::string::npos);
    }
}

TEST(Detector, HeadsShapeAndPriorAlignment) {
    DetectorConfig cfg = tiny_det_config();
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(6);
    det.init_params(store, rng);
    Graph<float> g(store, false);
    auto maps = det.backbone_forward<float>(g, g.input(random_image(3, 64, 64, rng)), std::nullopt);
    auto heads = det.heads_forward(g, maps);
    const auto priors = det.priors_for(64, 64);
    const int n = static_cast<int>(priors.size());
    EXPECT_EQ(heads.loc->value.shape(), (Shape{1, n, 4}));
    EXPECT_EQ(heads.conf->value.shape(), (Shape{1, n, 2}));
    // 4 anchors per cell over 8x8 + 4x4 + 2x2 + 1x1 cells.
    EXPECT_EQ(n, 4 * (64 + 16 + 4 + 1));
}

TEST(Detector, FlattenAnchorsLocalityProbe) {
    // Perturbing one head-map cell must move exactly the rows of that cell.
    Graph<float> g;
    const int anchors = 3, d = 4, H = 5, W = 7;
    TensorF base(anchors * d, H, W, 0.0f);
    auto flat0 = flatten_anchors(g.input(base), d);
    TensorF poked = base;
    const int py = 2, px = 4;
    for (int a = 0; a < anchors; ++a)
        for (int j = 0; j < d; ++j) poked.at(a * d + j, py, px) = 1.0f + a * 10 + j;
    auto flat1 = flatten_anchors(g.input(poked), d);
    for (int row = 0; row < H * W * anchors; ++row)
        for (int j = 0; j < d; ++j) {
            const bool expect_changed = row / anchors == py * W + px;
            const float v0 = flat0->value.at(0, row, j);
            const float v1 = flat1->value.at(0, row, j);
            if (expect_changed) {
                EXPECT_EQ(v1, 1.0f + (row % anchors) * 10 + j);
            } else {
                EXPECT_EQ(v0, v1);
            }
        }
}

TEST(Detector, ZeroHeadWeightsGiveNoDetectionsAtHalfThreshold) {
    DetectorConfig cfg = tiny_det_config();
    cfg.conf_threshold = 0.5;
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(7);
    det.init_params(store, rng);
    for (int m = 0; m < cfg.head_maps; ++m) {
        store.value(det.head_name(m) + ".loc.w").fill(0.0f);
        store.value(det.head_name(m) + ".loc.b").fill(0.0f);
        store.value(det.head_name(m) + ".conf.w").fill(0.0f);
        store.value(det.head_name(m) + ".conf.b").fill(0.0f);
    }
    Graph<float> g(store, false);
    auto dets = det.detect<float>(g, random_image(3, 64, 64, rng), std::nullopt);
    EXPECT_TRUE(dets.empty());
}

TEST(Detector, DetectDeterministic) {
    DetectorConfig cfg = tiny_det_config();
    cfg.conf_threshold = 0.05;
    Detector det(cfg);
    ParameterStoreF store;
    Rng rng(8);
    det.init_params(store, rng);
    TensorF image = random_image(3, 64, 64, rng);
    Graph<float> g1(store, false), g2(store, false);
    auto a = det.detect<float>(g1, image, std::nullopt);
    auto b = det.detect<float>(g2, image, std::nullopt);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].score, b[i].score);
        EXPECT_EQ(a[i].class_id, b[i].class_id);
        EXPECT_EQ(a[i].box.xmin, b[i].box.xmin);
    }
}

TEST(Detector, MapSizesRejectTooSmallInput) {
    DetectorConfig cfg = tiny_det_config();
    cfg.head_maps = 7;
    EXPECT_THROW(cfg.map_sizes(64, 64), ValidationError);
}
