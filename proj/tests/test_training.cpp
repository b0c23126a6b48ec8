#include <gtest/gtest.h>

#include "oracles.hpp"
#include "srdet/core/gradcheck.hpp"
#include "srdet/data/synth.hpp"
#include "srdet/train/trainer.hpp"

using namespace srdet;

namespace {

std::vector<PriorBox> grid_priors(int cells, double size) {
    std::vector<PriorBox> priors;
    for (int y = 0; y < cells; ++y)
        for (int x = 0; x < cells; ++x)
            priors.push_back(PriorBox{(x + 0.5) / cells, (y + 0.5) / cells, size, size, 0});
    return priors;
}

} // namespace

TEST(MatchPriors, ExactPriorMatch) {
    const auto priors = grid_priors(4, 0.25);
    // GT box equal to the prior at cell (1,2).
    const Box gt{(2.5 / 4 - 0.125) * 100, (1.5 / 4 - 0.125) * 100, (2.5 / 4 + 0.125) * 100,
                 (1.5 / 4 + 0.125) * 100};
    const auto match = match_priors({gt}, {0}, priors, 100, 100);
    EXPECT_EQ(match.num_positives, 1);
    const int p = 1 * 4 + 2;
    EXPECT_EQ(match.labels[p], 1);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(match.loc_targets[p][j], 0.0, 1e-9);
}

TEST(MatchPriors, ForcedBestMatchWhenAllBelowThreshold) {
    const auto priors = grid_priors(3, 0.2);
    const Box tiny{1, 1, 3, 3}; // IoU with every prior far below 0.5
    const auto match = match_priors({tiny}, {0}, priors, 100, 100);
    EXPECT_EQ(match.num_positives, 1);
}

TEST(MatchPriors, EveryGroundTruthGetsAPositive) {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const auto priors = grid_priors(5, rng.uniform(0.15, 0.4));
        std::vector<Box> gts;
        std::vector<int> cls;
        const int g = rng.uniform_int(1, 6);
        for (int i = 0; i < g; ++i) {
            Box b{rng.uniform(0, 70), rng.uniform(0, 70), 0, 0};
            b.xmax = b.xmin + rng.uniform(5, 30);
            b.ymax = b.ymin + rng.uniform(5, 30);
            gts.push_back(b);
            cls.push_back(rng.uniform_int(0, 1));
        }
        const auto match = match_priors(gts, cls, priors, 100, 100);
        EXPECT_GE(match.num_positives, g);
    }
}

TEST(MatchPriors, MatchesExhaustiveOracle) {
    Rng rng(32);
    for (int trial = 0; trial < 200; ++trial) {
        const auto priors = grid_priors(4, rng.uniform(0.2, 0.45));
        std::vector<Box> gts;
        std::vector<int> cls;
        const int g = rng.uniform_int(0, 5);
        for (int i = 0; i < g; ++i) {
            Box b{rng.uniform(0, 60), rng.uniform(0, 60), 0, 0};
            b.xmax = b.xmin + rng.uniform(8, 40);
            b.ymax = b.ymin + rng.uniform(8, 40);
            gts.push_back(b);
            cls.push_back(rng.uniform_int(0, 2));
        }
        const auto got = match_priors(gts, cls, priors, 100, 100);
        const auto want = oracles::match_reference(gts, cls, priors, 100, 100, 0.5);
        EXPECT_EQ(got.num_positives, want.num_positives);
        EXPECT_EQ(got.labels, want.labels);
        EXPECT_EQ(got.no_ground_truth, g == 0);
    }
}

TEST(MultiboxLoss, PerfectOffsetsZeroLocTerm) {
    const auto priors = grid_priors(2, 0.5);
    const Box gt{10, 10, 60, 60};
    const auto match = match_priors({gt}, {0}, priors, 100, 100);
    ASSERT_GT(match.num_positives, 0);

    Graph<float> g;
    TensorF loc(1, 4, 4);
    for (int p = 0; p < 4; ++p)
        for (int j = 0; j < 4; ++j) loc.at(0, p, j) = static_cast<float>(match.loc_targets[p][j]);
    TensorF conf(1, 4, 2, 0.0f);
    auto out = multibox_loss(g.var(loc), g.var(conf), match);
    EXPECT_NEAR(out.loc_term, 0.0, 1e-9);
    EXPECT_GT(out.conf_term, 0.0);
    EXPECT_GE(out.total->value[0], 0.0f);
}

TEST(MultiboxLoss, MiningCountFormula) {
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        const int cells = 4;
        const auto priors = grid_priors(cells, 0.3);
        const int n = static_cast<int>(priors.size());
        std::vector<Box> gts;
        const int g = rng.uniform_int(1, 3);
        std::vector<int> cls(g, 0);
        for (int i = 0; i < g; ++i) {
            Box b{rng.uniform(0, 50), rng.uniform(0, 50), 0, 0};
            b.xmax = b.xmin + rng.uniform(20, 45);
            b.ymax = b.ymin + rng.uniform(20, 45);
            gts.push_back(b);
        }
        const auto match = match_priors(gts, cls, priors, 100, 100);
        Graph<float> gr;
        TensorF loc(1, n, 4, 0.0f), conf(1, n, 2);
        for (auto& v : conf) v = static_cast<float>(rng.uniform(-2, 2));
        const auto out = multibox_loss(gr.var(loc), gr.var(conf), match, 3.0);
        const int expect = std::min(3 * match.num_positives, n - match.num_positives);
        EXPECT_EQ(out.num_negatives, expect);
        EXPECT_GE(out.total->value[0], 0.0f);
    }
}

TEST(MultiboxLoss, ZeroPositivesFallsBackToConfOnly) {
    const auto priors = grid_priors(3, 0.3);
    MatchResult match;
    const int n = static_cast<int>(priors.size());
    match.labels.assign(n, 0);
    match.positive.assign(n, 0);
    match.loc_targets.assign(n, {0, 0, 0, 0});
    match.no_ground_truth = true;

    Graph<float> g;
    Rng rng(34);
    TensorF loc(1, n, 4, 0.5f), conf(1, n, 2);
    for (auto& v : conf) v = static_cast<float>(rng.uniform(-1, 1));
    const auto out = multibox_loss(g.var(loc), g.var(conf), match, 3.0);
    EXPECT_TRUE(out.conf_only);
    EXPECT_EQ(out.num_negatives, 3);
    EXPECT_NEAR(out.loc_term, 0.0, 1e-12);
    EXPECT_GT(out.conf_term, 0.0);
}

TEST(MultiboxLoss, GradCheckAwayFromKinksAndTies) {
    const auto priors = grid_priors(2, 0.5);
    const Box gt{5, 5, 55, 55};
    const auto match = match_priors({gt}, {0}, priors, 100, 100);

    ParameterStore<double> store;
    Rng rng(35);
    auto& loc = store.create("loc", Shape{1, 4, 4});
    auto& conf = store.create("conf", Shape{1, 4, 2});
    // Offsets displaced from targets by ~0.3 (inside the quadratic zone,
    // away from |d| = 1); conf logits well separated to avoid mining ties.
    for (int p = 0; p < 4; ++p)
        for (int j = 0; j < 4; ++j)
            loc.at(0, p, j) = match.loc_targets[p][j] + 0.3 * (((p + j) % 2) ? 1 : -1);
    for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = rng.uniform(-1.5, 1.5);

    auto loss = [&](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto out = multibox_loss(g.param("loc"), g.param("conf"), match, 3.0);
        if (with_grad) g.backward(out.total);
        return static_cast<double>(out.total->value[0]);
    };
    GradCheckOptions opt;
    opt.tolerance = 1e-3;
    auto report = grad_check(store, loss, opt);
    EXPECT_TRUE(report.pass) << report.worst_param << " " << report.max_rel_error;
}

TEST(Schedules, ClosedForms) {
    EXPECT_DOUBLE_EQ(sr_stage_lr(0, 1e-4), 1e-4);
    EXPECT_DOUBLE_EQ(sr_stage_lr(199, 1e-4), 1e-4);
    EXPECT_DOUBLE_EQ(sr_stage_lr(200, 1e-4), 5e-5);
    EXPECT_DOUBLE_EQ(sr_stage_lr(400, 1e-4), 2.5e-5);
    EXPECT_DOUBLE_EQ(finetune_stage_lr(0, 1e-4), 1e-4);
    EXPECT_DOUBLE_EQ(finetune_stage_lr(9, 1e-4), 1e-4);
    EXPECT_NEAR(finetune_stage_lr(10, 1e-4), 1e-5, 1e-18);
    EXPECT_NEAR(finetune_stage_lr(20, 1e-4), 1e-6, 1e-19);
    EXPECT_NEAR(finetune_stage_lr(23, 1e-4), 1e-6, 1e-19);
}

TEST(Adam, ConvergesOnQuadraticAndSkipsFrozen) {
    ParameterStore<float> store;
    store.create("w", Shape{1, 1, 1}, 4.0f);
    store.create("frozen/w", Shape{1, 1, 1}, 4.0f);
    Adam<float> opt;
    for (int i = 0; i < 400; ++i) {
        store.zero_grads();
        store.grad("w")[0] = 2.0f * store.value("w")[0];
        store.grad("frozen/w")[0] = 2.0f * store.value("frozen/w")[0];
        opt.step(store, 0.05, [](const std::string& n) { return n.rfind("frozen/", 0) == 0; });
    }
    EXPECT_NEAR(store.value("w")[0], 0.0f, 1e-2f);
    EXPECT_FLOAT_EQ(store.value("frozen/w")[0], 4.0f);
}

namespace {

Dataset tiny_pair_dataset(int count, int canvas, std::uint64_t seed) {
    SynthConfig scfg;
    scfg.image_count = count;
    scfg.canvas = canvas;
    scfg.seed = seed;
    PairConfig pcfg;
    pcfg.normalize_size = canvas;
    return make_pairs(synth_dataset(scfg), pcfg);
}

SrNetConfig desk_sr_config() {
    SrNetConfig cfg;
    cfg.num_blocks = 2;
    cfg.base_channels = 12;
    cfg.alpha = 4;
    cfg.rdb.num_layers = 2;
    cfg.rdb.growth = 6;
    cfg.rdb.base_channels = 12;
    return cfg;
}

DetectorConfig desk_det_config() {
    DetectorConfig cfg;
    cfg.stages = {{1, 8}, {1, 12}, {2, 16}, {2, 24}, {2, 24}};
    cfg.encoder_channels = {24, 24};
    cfg.head_maps = 4;
    cfg.sr_channels = 12;
    cfg.num_classes = 1;
    return cfg;
}

} // namespace

TEST(TrainSr, SingleBatchOverfitLossDropsTenfold) {
    // Ship-dominated noise-free frame: the bicubic starting point is poor
    // (high-contrast hulls), which the memorized residual must fix.
    SynthConfig scfg;
    scfg.image_count = 1;
    scfg.canvas = 64;
    scfg.seed = 5;
    scfg.noise_sigma = 0.0;
    scfg.noise_octaves = 1;
    scfg.ships_min = scfg.ships_max = 2;
    scfg.ship_len_min = 0.4;
    scfg.ship_len_max = 0.6;
    PairConfig pcfg;
    pcfg.normalize_size = 64;
    Dataset ds = make_pairs(synth_dataset(scfg), pcfg);
    SrNet net(desk_sr_config());
    ParameterStore<float> store;
    Rng rng(41);
    net.init_params(store, rng);
    Adam<float> opt;

    SrTrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch_size = 1;
    cfg.lr = 2e-3;
    cfg.lr_halve_every = 150;
    cfg.steps_per_epoch = 1;
    cfg.augment_data = false;
    cfg.seed = 7;
    const TrainResult result = train_sr(ds, net, store, opt, cfg);
    ASSERT_FALSE(result.diverged);
    ASSERT_EQ(result.epochs_completed, 500);
    double best = result.log.front().total;
    for (const auto& e : result.log) best = std::min(best, e.total);
    EXPECT_LT(best * 10.0, result.log.front().total)
        << "first " << result.log.front().total << " best " << best;
}

TEST(TrainSr, ResumeReproducesNextLoss) {
    Dataset ds = tiny_pair_dataset(3, 128, 6);
    SrNet net(desk_sr_config());

    ParameterStore<float> store;
    Rng rng(42);
    net.init_params(store, rng);
    Adam<float> opt;

    SrTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.steps_per_epoch = 2;
    cfg.augment_data = true;
    cfg.seed = 13;
    train_sr(ds, net, store, opt, cfg);

    // Snapshot, then continue for one epoch.
    ParameterStore<float> resumed = store;
    Adam<float> opt2;
    opt2.import_state(opt.export_state());

    SrTrainConfig next = cfg;
    next.start_epoch = 3;
    next.epochs = 4;
    const TrainResult a = train_sr(ds, net, store, opt, next);
    const TrainResult b = train_sr(ds, net, resumed, opt2, next);
    ASSERT_EQ(a.log.size(), 1u);
    ASSERT_EQ(b.log.size(), 1u);
    EXPECT_NEAR(a.log[0].total, b.log[0].total, 1e-6);
}

TEST(Finetune, GradientReachesSrParamsBothVariants) {
    Dataset ds = tiny_pair_dataset(2, 128, 8);
    SrNet srnet(desk_sr_config());
    Detector det(desk_det_config());

    for (bool full : {true, false}) {
        ParameterStore<float> store;
        Rng rng(43);
        srnet.init_params(store, rng);
        det.init_params(store, rng);
        if (full) det.init_adapter_params(store);
        Adam<float> opt;
        FinetuneConfig cfg;
        cfg.epochs = 1;
        cfg.steps_per_epoch = 1;
        cfg.batch_size = 1;
        cfg.full_integration = full;
        cfg.augment_data = false;
        const TrainResult result = finetune_e2e(ds, srnet, det, store, opt, cfg);
        ASSERT_FALSE(result.diverged);

        // After the single step some SR parameter must have moved, which
        // requires a nonzero gradient through the detection loss.
        ParameterStore<float> fresh;
        Rng rng2(43);
        srnet.init_params(fresh, rng2);
        double delta = 0.0;
        const auto& w0 = fresh.value("sr/f0.w");
        const auto& w1 = store.value("sr/f0.w");
        for (std::size_t i = 0; i < w0.size(); ++i) delta += std::fabs(double(w1[i]) - double(w0[i]));
        EXPECT_GT(delta, 0.0) << (full ? "full_integration" : "no_integration");
    }
}

TEST(Finetune, NoIntegrationEqualsPlainSsdForward) {
    Dataset ds = tiny_pair_dataset(1, 128, 9);
    SrNet srnet(desk_sr_config());
    Detector det(desk_det_config());
    ParameterStore<float> store;
    Rng rng(44);
    srnet.init_params(store, rng);
    det.init_params(store, rng);

    const Sample& s = ds.samples[0];
    Graph<float> g1(store, false);
    auto trace = srnet.forward(g1, s.lr_image);
    auto maps_via_variant = det.backbone_forward<float>(g1, trace.sr_image, std::nullopt);

    Graph<float> g2(store, false);
    auto maps_plain = det.backbone_forward<float>(g2, g2.input(trace.sr_image->value), std::nullopt);
    ASSERT_EQ(maps_via_variant.size(), maps_plain.size());
    for (std::size_t m = 0; m < maps_plain.size(); ++m)
        for (std::size_t i = 0; i < maps_plain[m]->value.size(); ++i)
            ASSERT_EQ(maps_via_variant[m]->value[i], maps_plain[m]->value[i]);
}

TEST(Finetune, MissingAdaptersIsConfigError) {
    Dataset ds = tiny_pair_dataset(1, 128, 10);
    SrNet srnet(desk_sr_config());
    Detector det(desk_det_config());
    ParameterStore<float> store;
    Rng rng(45);
    srnet.init_params(store, rng);
    det.init_params(store, rng);
    Adam<float> opt;
    FinetuneConfig cfg;
    cfg.full_integration = true;
    EXPECT_THROW(finetune_e2e(ds, srnet, det, store, opt, cfg), ConfigError);
}
