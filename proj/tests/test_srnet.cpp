#include <gtest/gtest.h>

#include "srdet/core/gradcheck.hpp"
#include "srdet/sr/srnet.hpp"

using namespace srdet;

namespace {

SrNetConfig tiny_config() {
    SrNetConfig cfg;
    cfg.num_blocks = 2;
    cfg.base_channels = 8;
    cfg.alpha = 2;
    cfg.rdb.num_layers = 2;
    cfg.rdb.growth = 4;
    cfg.rdb.base_channels = 8;
    return cfg;
}

TensorF random_image(int c, int h, int w, Rng& rng) {
    TensorF img(c, h, w);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    return img;
}

} // namespace

TEST(SrNet, RdbShapePreservation) {
    SrNetConfig cfg = tiny_config();
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(1);
    net.init_params(store, rng);
    Graph<float> g(store);
    auto in = g.input(TensorF(8, 16, 16, 0.5f));
    auto out = net.rdb_forward(g, in, 0);
    EXPECT_EQ(out->value.shape(), (Shape{8, 16, 16}));
    EXPECT_THROW(net.rdb_forward(g, g.input(TensorF(4, 16, 16)), 0), ShapeError);
}

TEST(SrNet, RdbZeroWeightsIsIdentity) {
    SrNetConfig cfg = tiny_config();
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(2);
    net.init_params(store, rng);
    for (const auto& name : store.names()) store.value(name).fill(0.0f);
    Graph<float> g(store);
    TensorF in = random_image(8, 6, 6, rng);
    auto out = net.rdb_forward(g, g.input(in), 1);
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_FLOAT_EQ(out->value[i], in[i]);
}

TEST(SrNet, FusionWidthBookkeeping) {
    RdbConfig rdb; // paper defaults
    EXPECT_EQ(rdb.fusion_width(), 64 + 5 * 32);
    SrNetConfig cfg; // defaults: 8 blocks, 64 channels
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(3);
    net.init_params(store, rng);
    EXPECT_EQ(store.value("sr/rdb0.fuse.w").shape(), (Shape{64, 224, 1}));
    EXPECT_EQ(store.value("sr/gfuse.w").shape(), (Shape{64, 8 * 64, 1}));
}

TEST(SrNet, ForwardTraceShapes) {
    SrNetConfig cfg = tiny_config();
    cfg.alpha = 4;
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(4);
    net.init_params(store, rng);
    Graph<float> g(store, /*trainable=*/false);
    TensorF lr = random_image(3, 12, 10, rng);
    auto trace = net.forward(g, lr);
    EXPECT_EQ(trace.f0->value.shape(), (Shape{8, 12, 10}));
    EXPECT_EQ(trace.f_lr_out->value.shape(), (Shape{8, 12, 10}));
    EXPECT_EQ(trace.f_hr_out->value.shape(), (Shape{8, 48, 40}));
    EXPECT_EQ(trace.sr_image->value.shape(), (Shape{3, 48, 40}));
    // F_HR_out holds alpha^2 times the elements of F_LR_out.
    EXPECT_EQ(trace.f_hr_out->value.size(), trace.f_lr_out->value.size() * 16);

    EXPECT_THROW(net.forward(g, TensorF(3, 4, 4, 0.1f)), ValidationError);
    EXPECT_THROW(net.forward(g, TensorF(1, 16, 16, 0.1f)), ShapeError);
}

TEST(SrNet, ZeroResidualConvDegeneratesToBicubic) {
    SrNetConfig cfg = tiny_config();
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(5);
    net.init_params(store, rng);
    store.value("sr/res.w").fill(0.0f);
    store.value("sr/res.b").fill(0.0f);
    Graph<float> g(store, false);
    TensorF lr = random_image(3, 9, 9, rng);
    auto trace = net.forward(g, lr);
    TensorF up = bicubic_resize(lr, 2.0);
    for (std::size_t i = 0; i < up.size(); ++i) EXPECT_FLOAT_EQ(trace.sr_image->value[i], up[i]);
}

TEST(SrNet, InitDeterministicAndNearBicubicAtStart) {
    SrNetConfig cfg = tiny_config();
    SrNet net(cfg);
    ParameterStoreF a, b;
    Rng ra(77), rb(77);
    net.init_params(a, ra);
    net.init_params(b, rb);
    ASSERT_EQ(a.names(), b.names());
    for (const auto& name : a.names()) {
        const auto& va = a.value(name);
        const auto& vb = b.value(name);
        ASSERT_EQ(va.shape(), vb.shape());
        for (std::size_t i = 0; i < va.size(); ++i) ASSERT_EQ(va[i], vb[i]) << name;
    }

    Graph<float> g(a, false);
    Rng rng(6);
    TensorF lr = random_image(3, 10, 10, rng);
    auto trace = net.forward(g, lr);
    TensorF up = bicubic_resize(lr, 2.0);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i)
        max_dev = std::max(max_dev, std::fabs(static_cast<double>(trace.sr_image->value[i] - up[i])));
    EXPECT_LT(max_dev, 1e-2);
}

TEST(SrNet, ParamCountMatchesAnalyticFormula) {
    SrNetConfig cfg; // paper defaults
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(7);
    net.init_params(store, rng);
    // Independent closed form: initial conv, per-block growth convs and
    // 1x1 fusion, global fusion, expansion conv, residual conv.
    auto conv = [](long out, long in, long k) { return out * in * k * k + out; };
    long expect = conv(64, 3, 3);
    expect += 8 * (conv(32, 64, 3) + conv(32, 96, 3) + conv(32, 128, 3) + conv(32, 160, 3) +
                   conv(32, 192, 3) + conv(64, 224, 1));
    expect += conv(64, 512, 1);
    expect += conv(64 * 16, 64, 3);
    expect += conv(3, 64, 3);
    EXPECT_EQ(store.total_elements(), static_cast<std::size_t>(expect));
    EXPECT_EQ(net.param_count(), static_cast<std::size_t>(expect));
}

TEST(SrNet, L1BackwardReachesEveryBlock) {
    SrNetConfig cfg = tiny_config();
    SrNet net(cfg);
    ParameterStoreF store;
    Rng rng(8);
    net.init_params(store, rng);
    Graph<float> g(store);
    TensorF lr = random_image(3, 8, 8, rng);
    auto trace = net.forward(g, lr);
    TensorF target(3, 16, 16);
    for (auto& v : target) v = static_cast<float>(rng.uniform());
    g.backward(l1_loss(trace.sr_image, g.input(target)));
    for (int blk = 0; blk < cfg.num_blocks; ++blk)
        for (int layer = 0; layer < cfg.rdb.num_layers; ++layer) {
            const auto& grad =
                store.grad("sr/rdb" + std::to_string(blk) + ".c" + std::to_string(layer) + ".w");
            double mag = 0.0;
            for (float v : grad) mag += std::fabs(v);
            EXPECT_GT(mag, 0.0) << "dead block " << blk << " layer " << layer;
        }
}

TEST(SrNet, TinyCompositeGradCheck) {
    SrNetConfig cfg = tiny_config();
    SrNet net(cfg);
    ParameterStoreD store;
    Rng rng(9);
    net.init_params(store, rng);
    Rng img_rng(10);
    TensorD lr(3, 8, 8);
    for (auto& v : lr) v = img_rng.uniform();
    TensorD target(3, 16, 16);
    for (auto& v : target) v = img_rng.uniform();

    auto loss = [&](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto trace = net.forward(g, lr);
        auto l = l1_loss(trace.sr_image, g.input(target));
        if (with_grad) g.backward(l);
        return static_cast<double>(l->value[0]);
    };
    GradCheckOptions opt;
    opt.tolerance = 1e-3;
    opt.max_elements_per_param = 40;
    auto report = grad_check(store, loss, opt);
    EXPECT_TRUE(report.pass) << report.worst_param << " err " << report.max_rel_error;
}
