// Command-line entry point: dataset generation, the two training stages,
// evaluation, the five-variant ablation harness, single-image inference and
// the gradient-check suite. Every command writes into a run directory
// containing a canonical config snapshot, so any run is reproducible from
// its outputs alone.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "srdet/core/threading.hpp"
#include "srdet/data/voc.hpp"
#include "srdet/eval/ablation.hpp"
#include "srdet/eval/gradsuite.hpp"
#include "srdet/eval/metrics.hpp"
#include "srdet/image/draw.hpp"
#include "srdet/io/checkpoint.hpp"
#include "srdet/io/config.hpp"
#include "srdet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace srdet;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out;
    std::string checkpoint;
    std::string det_checkpoint;
    std::string variant;
    std::string image;
    std::string split = "test";
    std::string seeds_list;
    long long seed = -1;
    int epochs = -1;
    int device_threads = 0;
    int render_count = 4;
};

ExperimentConfig load_config(const GlobalArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = parse_config(args.config_path);
    if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.variant.empty()) cfg.variant = args.variant;
    cfg.validate();
    return cfg;
}

fs::path make_run_dir(const GlobalArgs& args, const ExperimentConfig& cfg,
                      const std::string& command) {
    if (!args.out.empty()) {
        fs::create_directories(args.out);
        return args.out;
    }
    const char* env_root = std::getenv("SRDET_OUT_ROOT");
    const fs::path root = env_root && *env_root ? fs::path(env_root) : fs::path("runs");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
    fs::path dir = root / (std::string(stamp) + "_seed" + std::to_string(cfg.train.seed) + "_" +
                           command);
    for (int n = 1; fs::exists(dir); ++n)
        dir = root / (std::string(stamp) + "_seed" + std::to_string(cfg.train.seed) + "_" +
                      command + "-" + std::to_string(n));
    fs::create_directories(dir);
    return dir;
}

void write_snapshot(const fs::path& run_dir, const ExperimentConfig& cfg) {
    std::ofstream out(run_dir / "config.snapshot");
    out << serialize_config(cfg);
}

Dataset load_pairs(const ExperimentConfig& cfg, const std::string& split) {
    const fs::path root = cfg.dataset.root;
    if (!fs::exists(root / "splits" / (split + ".txt")))
        throw IoError("dataset split not found: " + (root / "splits" / (split + ".txt")).string() +
                      " (run `srdet gen-data` first or point dataset.root at a VOC-layout tree)");
    VocLoadReport report;
    const RawDataset raw = load_voc_raw(root, split, cfg.class_names(), &report);
    if (report.missing_annotations > 0)
        std::cerr << "warning: skipped " << report.missing_annotations
                  << " image(s) with missing annotations\n";
    if (report.dropped_boxes > 0)
        std::cerr << "warning: dropped " << report.dropped_boxes << " zero-area box(es)\n";
    int dropped = 0;
    Dataset ds = make_pairs(raw, cfg.pair_config(), &dropped);
    if (dropped > 0)
        std::cerr << "warning: dropped " << dropped << " box(es) collapsing below 2px in HR\n";
    return ds;
}

void require_prefix(const ParameterStore<float>& store, const std::string& prefix,
                    const std::string& variant) {
    if (store.names_with_prefix(prefix).empty())
        throw ConfigError("checkpoint lacks '" + prefix + "' parameters required by variant '" +
                          variant + "'");
}

std::vector<std::uint64_t> parse_seeds(const GlobalArgs& args, const ExperimentConfig& cfg) {
    if (args.seeds_list.empty()) return {cfg.train.seed};
    std::vector<std::uint64_t> seeds;
    for (const std::string& part : ExperimentConfig::split_list(args.seeds_list))
        seeds.push_back(std::stoull(part));
    if (seeds.empty()) throw ConfigError("--seeds given but empty");
    return seeds;
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    if (args.seed >= 0) cfg.dataset.synth_seed = static_cast<std::uint64_t>(args.seed);
    const fs::path run_dir = make_run_dir(args, cfg, "gen-data");
    write_snapshot(run_dir, cfg);

    const RawDataset train = synth_dataset(cfg.synth_config(false), "train");
    const RawDataset test = synth_dataset(cfg.synth_config(true), "test");
    write_voc_dataset(train, cfg.dataset.root);
    write_voc_dataset(test, cfg.dataset.root);

    std::size_t train_boxes = 0, test_boxes = 0;
    for (const auto& s : train.samples) train_boxes += s.boxes.size();
    for (const auto& s : test.samples) test_boxes += s.boxes.size();
    std::ofstream summary(run_dir / "gen_data_summary.txt");
    summary << "root " << cfg.dataset.root << "\ntrain images " << train.samples.size()
            << " boxes " << train_boxes << "\ntest images " << test.samples.size() << " boxes "
            << test_boxes << "\n";
    std::cout << "wrote " << train.samples.size() << " train / " << test.samples.size()
              << " test images to " << cfg.dataset.root << "\n";
    return 0;
}

int cmd_train_sr(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    if (args.epochs >= 0) cfg.train.sr_epochs = args.epochs;
    const fs::path run_dir = make_run_dir(args, cfg, "train-sr");
    write_snapshot(run_dir, cfg);

    const Dataset train = load_pairs(cfg, "train");
    const SrNet net(cfg.sr_config());

    ParameterStore<float> store;
    Adam<float> opt;
    SrTrainConfig tcfg = cfg.sr_train_config();
    if (!args.checkpoint.empty()) {
        const Checkpoint ck = load_checkpoint(args.checkpoint);
        store = ck.params;
        require_prefix(store, net.prefix(), "SR training resume");
        opt.import_state(ck.extra);
        tcfg.start_epoch = ck.meta.epoch;
        std::cout << "resuming from epoch " << tcfg.start_epoch << "\n";
    } else {
        Rng rng(cfg.train.seed ^ 0x5e);
        net.init_params(store, rng);
    }

    std::ofstream log(run_dir / "train_log.csv");
    log << "epoch,lr,l1\n";
    double last_loss = 0.0;
    const auto save = [&](int epoch, double loss, const fs::path& path) {
        CheckpointMeta meta;
        meta.epoch = epoch;
        meta.config_snapshot = serialize_config(cfg);
        meta.metrics["l1"] = loss;
        save_checkpoint(path, store, meta, opt.export_state());
    };
    const TrainResult result =
        train_sr(train, net, store, opt, tcfg, [&](const EpochLog& e) {
            char line[96];
            std::snprintf(line, sizeof(line), "%d,%.10g,%.8f\n", e.epoch, e.lr, e.total);
            log << line << std::flush;
            last_loss = e.total;
            if (cfg.train.checkpoint_every > 0 && (e.epoch + 1) % cfg.train.checkpoint_every == 0)
                save(e.epoch + 1, e.total, run_dir / ("sr_epoch" + std::to_string(e.epoch + 1) +
                                                      ".ckpt"));
        });
    if (result.diverged) {
        std::cerr << "training diverged (non-finite loss); last good checkpoint kept\n";
        if (result.epochs_completed > 0)
            save(result.epochs_completed, last_loss, run_dir / "sr_last_good.ckpt");
        return 1;
    }
    save(cfg.train.sr_epochs, last_loss, run_dir / "sr.ckpt");
    std::cout << "SR checkpoint: " << (run_dir / "sr.ckpt").string() << " (final L1 " << last_loss
              << ")\n";
    return 0;
}

int cmd_finetune(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    if (args.epochs >= 0) cfg.train.ft_epochs = args.epochs;
    const Variant variant = variant_from_name(cfg.variant);
    bool full_integration = false;
    if (variant == Variant::ShipSrDet) full_integration = true;
    else if (variant == Variant::SrnetSsdFt) full_integration = false;
    else
        throw ConfigError("finetune expects variant 'ShipSRDet' or '(SRnet+SSD)_ft', got '" +
                          cfg.variant + "'");
    if (args.checkpoint.empty()) throw ConfigError("finetune requires --checkpoint <sr.ckpt>");

    const fs::path run_dir = make_run_dir(args, cfg, "finetune");
    write_snapshot(run_dir, cfg);

    const Dataset train = load_pairs(cfg, "train");
    const SrNet srnet(cfg.sr_config());
    const Detector det(cfg.det_config());

    ParameterStore<float> store;
    {
        const Checkpoint sr_ck = load_checkpoint(args.checkpoint);
        require_prefix(sr_ck.params, srnet.prefix(), cfg.variant);
        for (const std::string& name : sr_ck.params.names_with_prefix(srnet.prefix()))
            store.add(name, sr_ck.params.value(name));
    }
    if (!args.det_checkpoint.empty()) {
        const Checkpoint det_ck = load_checkpoint(args.det_checkpoint);
        require_prefix(det_ck.params, det.prefix(), cfg.variant);
        for (const std::string& name : det_ck.params.names_with_prefix(det.prefix()))
            store.add(name, det_ck.params.value(name));
        if (full_integration)
            for (const std::string& name : det_ck.params.names_with_prefix(det.adapter_prefix()))
                store.add(name, det_ck.params.value(name));
    } else {
        Rng rng(cfg.train.seed ^ 0xde7);
        det.init_params(store, rng);
    }
    if (full_integration && !store.has(det.adapter_prefix() + "hr.w"))
        det.init_adapter_params(store);

    Adam<float> opt;
    std::ofstream log(run_dir / "train_log.csv");
    log << "epoch,lr,total,loc,conf\n";
    double last_loss = 0.0;
    const TrainResult result = finetune_e2e(
        train, srnet, det, store, opt, cfg.finetune_config(full_integration),
        [&](const EpochLog& e) {
            char line[128];
            std::snprintf(line, sizeof(line), "%d,%.10g,%.8f,%.8f,%.8f\n", e.epoch, e.lr, e.total,
                          e.loc, e.conf);
            log << line << std::flush;
            last_loss = e.total;
        });
    CheckpointMeta meta;
    meta.epoch = result.epochs_completed;
    meta.config_snapshot = serialize_config(cfg);
    meta.metrics["loss"] = last_loss;
    if (result.diverged) {
        std::cerr << "fine-tuning diverged (non-finite loss)\n";
        if (result.epochs_completed > 0)
            save_checkpoint(run_dir / "ft_last_good.ckpt", store, meta, opt.export_state());
        return 1;
    }
    save_checkpoint(run_dir / "ft.ckpt", store, meta, opt.export_state());
    std::cout << "fine-tuned checkpoint: " << (run_dir / "ft.ckpt").string() << "\n";
    return 0;
}

int cmd_eval(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    if (args.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
    const Variant variant = variant_from_name(cfg.variant);
    const fs::path run_dir = make_run_dir(args, cfg, "eval");
    write_snapshot(run_dir, cfg);

    const Dataset ds = load_pairs(cfg, args.split);
    const SrNet srnet(cfg.sr_config());
    const Detector det(cfg.det_config());

    Checkpoint ck = load_checkpoint(args.checkpoint);
    ParameterStore<float>& store = ck.params;
    require_prefix(store, det.prefix(), cfg.variant);
    if (variant_uses_sr(variant)) require_prefix(store, srnet.prefix(), cfg.variant);
    if (variant_uses_injection(variant)) require_prefix(store, det.adapter_prefix(), cfg.variant);

    std::vector<std::pair<std::string, std::vector<Detection>>> per_image;
    auto detect_fn = [&](const Sample& s) {
        auto dets = variant_detect(variant, srnet, det, store, s);
        per_image.emplace_back(s.id, dets);
        return dets;
    };
    const EvalResult result = evaluate_map(detect_fn, ds, cfg.eval.iou_threshold,
                                           cfg.eval.eleven_point);

    {
        std::ofstream csv(run_dir / "eval.csv");
        csv << "class,ap\n";
        char line[96];
        const auto classes = cfg.class_names();
        for (const auto& [cls, ap] : result.per_class_ap) {
            std::snprintf(line, sizeof(line), "%s,%.6f\n", classes.at(cls).c_str(), ap);
            csv << line;
        }
        std::snprintf(line, sizeof(line), "mAP,%.6f\n", result.map);
        csv << line;
    }
    write_detections_csv(run_dir / "detections.csv", per_image);

    // SR quality metrics (supports the visual-results comparison).
    if (variant_uses_sr(variant) || variant == Variant::BicubicSsd) {
        double sum_sr = 0.0, sum_bic = 0.0;
        for (const Sample& s : ds.samples) {
            const TensorF up = bicubic_resize(s.lr_image, static_cast<double>(cfg.model.alpha));
            sum_bic += psnr(up, s.hr_image);
            if (variant_uses_sr(variant)) {
                Graph<float> g(store, false);
                auto trace = srnet.forward(g, s.lr_image);
                sum_sr += psnr(trace.sr_image->value, s.hr_image);
            }
        }
        std::ofstream csv(run_dir / "psnr.csv");
        csv << "metric,db\n";
        char line[96];
        std::snprintf(line, sizeof(line), "bicubic_psnr,%.4f\n", sum_bic / ds.size());
        csv << line;
        if (variant_uses_sr(variant)) {
            std::snprintf(line, sizeof(line), "sr_psnr,%.4f\n", sum_sr / ds.size());
            csv << line;
        }
    }

    // Rendered qualitative results for the first few images.
    if (args.render_count > 0) {
        fs::create_directories(run_dir / "renders");
        const int n = std::min<int>(args.render_count, static_cast<int>(ds.size()));
        for (int i = 0; i < n; ++i) {
            const Sample& s = ds.samples[i];
            TensorF frame;
            if (variant == Variant::HrSsd) frame = s.hr_image;
            else if (variant == Variant::BicubicSsd)
                frame = bicubic_resize(s.lr_image, static_cast<double>(cfg.model.alpha));
            else {
                Graph<float> g(store, false);
                frame = srnet.forward(g, s.lr_image).sr_image->value;
            }
            render_detections(frame, per_image[i].second, s.boxes,
                              run_dir / "renders" / (s.id + ".png"));
        }
    }

    std::cout << "variant " << cfg.variant << " mAP = " << result.map << " ("
              << result.matched_ground_truths << "/" << result.total_ground_truths
              << " ground truths matched, " << result.total_detections << " detections)\n";
    return 0;
}

int cmd_ablate(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    const fs::path run_dir = make_run_dir(args, cfg, "ablate");
    write_snapshot(run_dir, cfg);
    set_num_threads(args.device_threads);

    Dataset train, test;
    if (fs::exists(fs::path(cfg.dataset.root) / "splits" / "train.txt")) {
        train = load_pairs(cfg, "train");
        test = load_pairs(cfg, "test");
    } else {
        std::cout << "dataset root missing; generating the synthetic dataset in memory\n";
        train = make_pairs(synth_dataset(cfg.synth_config(false), "train"), cfg.pair_config());
        test = make_pairs(synth_dataset(cfg.synth_config(true), "test"), cfg.pair_config());
    }

    const auto seeds = parse_seeds(args, cfg);
    const AblationResult result = run_ablation(cfg, train, test, seeds, run_dir, &std::cout);

    std::ifstream table(run_dir / "ablation_table.txt");
    std::cout << table.rdbuf();
    std::cout << "reports under " << run_dir.string() << "\n";
    return 0;
}

int cmd_infer(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    if (args.checkpoint.empty() || args.image.empty())
        throw ConfigError("infer requires --checkpoint and --image");
    const Variant variant = variant_from_name(cfg.variant);
    const fs::path run_dir = make_run_dir(args, cfg, "infer");
    write_snapshot(run_dir, cfg);

    RawSample raw;
    raw.id = fs::path(args.image).stem().string();
    raw.image = read_image(args.image);
    const Sample sample = make_pair(raw, cfg.pair_config());

    const SrNet srnet(cfg.sr_config());
    const Detector det(cfg.det_config());
    Checkpoint ck = load_checkpoint(args.checkpoint);
    require_prefix(ck.params, det.prefix(), cfg.variant);
    if (variant_uses_sr(variant)) require_prefix(ck.params, srnet.prefix(), cfg.variant);
    if (variant_uses_injection(variant)) require_prefix(ck.params, det.adapter_prefix(), cfg.variant);

    const auto dets = variant_detect(variant, srnet, det, ck.params, sample);
    write_detections_csv(run_dir / "detections.csv", {{raw.id, dets}});

    TensorF frame;
    if (variant == Variant::HrSsd) frame = sample.hr_image;
    else if (variant == Variant::BicubicSsd)
        frame = bicubic_resize(sample.lr_image, static_cast<double>(cfg.model.alpha));
    else {
        Graph<float> g(ck.params, false);
        frame = srnet.forward(g, sample.lr_image).sr_image->value;
    }
    const fs::path render_path = run_dir / (raw.id + "_det.png");
    render_detections(frame, dets, {}, render_path);
    std::cout << dets.size() << " detection(s); " << (run_dir / "detections.csv").string()
              << " and " << render_path.string() << "\n";
    return 0;
}

int cmd_grad_check(const GlobalArgs& args) {
    ExperimentConfig cfg = load_config(args);
    const fs::path run_dir = make_run_dir(args, cfg, "grad-check");
    write_snapshot(run_dir, cfg);

    const GradSuiteResult suite = run_grad_suite();
    std::ofstream report(run_dir / "gradcheck_report.txt");
    for (const auto& e : suite.entries) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-28s max_rel_err %.3e (tolerance %.0e, epsilon %.0e) %s\n",
                      e.name.c_str(), e.report.max_rel_error, e.tolerance, e.report.epsilon,
                      e.report.pass ? "PASS" : "FAIL");
        report << line;
        std::cout << line;
        for (const auto& f : e.report.failures) {
            report << "    " << f << "\n";
            std::cout << "    " << f << "\n";
        }
    }
    return suite.all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"super-resolution assisted ship detection pipeline"};
    app.require_subcommand(1);
    GlobalArgs args;

    app.add_option("--config", args.config_path, "experiment config file (key = value lines)");
    app.add_option("--seed", args.seed, "override train.seed (and the synth seed for gen-data)");
    app.add_option("--out", args.out, "run directory (default: timestamped under $SRDET_OUT_ROOT)");
    app.add_option("--variant", args.variant, "pipeline variant (Table-1 row name)");
    app.add_option("--checkpoint", args.checkpoint, "checkpoint file to load");
    app.add_option("--epochs", args.epochs, "override the stage's epoch count");
    app.add_option("--device-threads", args.device_threads,
                   "worker threads for conv kernels (0 = auto, results identical)");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic VOC-layout dataset");
    gen->fallthrough();
    auto* train_sr_cmd = app.add_subcommand("train-sr", "stage 1: pretrain the SR module (L1)");
    train_sr_cmd->fallthrough();
    auto* finetune = app.add_subcommand("finetune", "stage 2: end-to-end fine-tuning");
    finetune->fallthrough();
    finetune->add_option("--det-checkpoint", args.det_checkpoint,
                         "detector initialization checkpoint");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate mAP / PSNR for a checkpoint");
    eval_cmd->fallthrough();
    eval_cmd->add_option("--split", args.split, "dataset split (default test)");
    eval_cmd->add_option("--render", args.render_count, "render the first N images (default 4)");
    auto* ablate = app.add_subcommand("ablate", "run the five-variant ablation study");
    ablate->fallthrough();
    ablate->add_option("--seeds", args.seeds_list, "comma-separated seeds (default: train.seed)");
    auto* infer = app.add_subcommand("infer", "detect ships in a single image");
    infer->fallthrough();
    infer->add_option("--image", args.image, "input image (png/jpg)");
    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
    grad->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    set_num_threads(args.device_threads);
    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (train_sr_cmd->parsed()) return cmd_train_sr(args);
        if (finetune->parsed()) return cmd_finetune(args);
        if (eval_cmd->parsed()) return cmd_eval(args);
        if (ablate->parsed()) return cmd_ablate(args);
        if (infer->parsed()) return cmd_infer(args);
        if (grad->parsed()) return cmd_grad_check(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 2;
}
