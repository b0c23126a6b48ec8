#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "srdet/data/pairs.hpp"
#include "srdet/data/sample.hpp"
#include "srdet/det/detector.hpp"
#include "srdet/sr/srnet.hpp"
#include "srdet/train/multibox.hpp"
#include "srdet/train/optim.hpp"

namespace srdet {

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double total = 0.0;
    double loc = 0.0;
    double conf = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    bool diverged = false;
    int epochs_completed = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

inline std::vector<int> shuffled_indices(std::size_t n, Rng rng) {
    std::vector<int> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    for (int i = static_cast<int>(n) - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.uniform_int(0, i)]);
    return idx;
}

inline int steps_per_epoch(const Dataset& ds, int batch, int override_steps) {
    if (override_steps > 0) return override_steps;
    return static_cast<int>((ds.size() + batch - 1) / batch);
}

} // namespace detail

/// Stage-one configuration (SR pretraining with L1 loss). Paper-scale
/// defaults; desk runs override epochs.
struct SrTrainConfig {
    int epochs = 450;
    int start_epoch = 0; // resume point; schedules and shuffles use absolute epochs
    int batch_size = 4;
    double lr = 1e-4;
    int lr_halve_every = 200;
    std::uint64_t seed = 0;
    int steps_per_epoch = 0; // 0: full pass over the train split
    bool augment_data = true;
};

/// L1 training of the SR module over HR/LR pairs with the halving
/// schedule. Aborts on a non-finite loss (the caller keeps the last
/// checkpoint it wrote).
inline TrainResult train_sr(const Dataset& ds, const SrNet& net, ParameterStore<float>& store,
                            Adam<float>& opt, const SrTrainConfig& cfg,
                            const EpochCallback& on_epoch = nullptr) {
    if (ds.empty()) throw ValidationError("train_sr: empty training split");
    TrainResult result;
    const Rng root(cfg.seed);
    const int steps = detail::steps_per_epoch(ds, cfg.batch_size, cfg.steps_per_epoch);

    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = sr_stage_lr(epoch, cfg.lr, cfg.lr_halve_every);
        const auto order = detail::shuffled_indices(ds.size(), root.split(0x5b0f).split(epoch));
        double epoch_loss = 0.0;
        for (int step = 0; step < steps; ++step) {
            store.zero_grads();
            double batch_loss = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const int sample_idx = order[(step * cfg.batch_size + b) % ds.size()];
                Sample sample = ds.samples[sample_idx];
                if (cfg.augment_data) {
                    Rng aug = root.split(0xa06).split(epoch).split(step).split(b);
                    sample = augment(sample, aug);
                }
                Graph<float> g(store);
                auto trace = net.forward(g, sample.lr_image);
                auto loss = scale_scalar(l1_loss(trace.sr_image, g.input(sample.hr_image)),
                                         1.0 / cfg.batch_size);
                g.backward(loss);
                batch_loss += loss->value[0];
            }
            if (!std::isfinite(batch_loss)) {
                result.diverged = true;
                return result;
            }
            opt.step(store, lr);
            epoch_loss += batch_loss;
        }
        EpochLog log{epoch, lr, epoch_loss / steps, 0.0, 0.0};
        result.log.push_back(log);
        result.epochs_completed = epoch + 1;
        if (on_epoch) on_epoch(log);
    }
    return result;
}

/// Stage-two configuration (end-to-end fine-tuning under detection loss).
struct FinetuneConfig {
    int epochs = 24;
    int start_epoch = 0;
    int batch_size = 4;
    double lr = 1e-4;
    int lr_decay_every = 10;
    double lr_decay = 0.1;
    std::uint64_t seed = 0;
    /// false realizes the (SRnet+SSD)_ft variant: the injection ports are
    /// disabled and only the SR image reaches the detector.
    bool full_integration = true;
    /// Optional auxiliary image loss weight; 0 keeps fine-tuning purely
    /// detection-driven.
    double aux_l1_weight = 0.0;
    bool freeze_sr = false;
    bool freeze_det = false;
    double match_iou = 0.5;
    double neg_ratio = 3.0;
    int steps_per_epoch = 0;
    bool augment_data = true;
};

/// Joint optimization of SR module, adapters and detector under the
/// multibox loss. Gradients reach the SR parameters through the SR image
/// and, with full integration, also through the injected features.
inline TrainResult finetune_e2e(const Dataset& ds, const SrNet& srnet, const Detector& det,
                                ParameterStore<float>& store, Adam<float>& opt,
                                const FinetuneConfig& cfg, const EpochCallback& on_epoch = nullptr) {
    if (ds.empty()) throw ValidationError("finetune: empty training split");
    if (cfg.full_integration &&
        (!store.has(det.adapter_prefix() + "hr.w") || !store.has(det.adapter_prefix() + "lr.w")))
        throw ConfigError("full_integration variant requires adapter parameters in the store");

    TrainResult result;
    const Rng root(cfg.seed);
    const int steps = detail::steps_per_epoch(ds, cfg.batch_size, cfg.steps_per_epoch);
    const int hr_h = ds.samples[0].hr_image.height();
    const int hr_w = ds.samples[0].hr_image.width();
    const auto priors = det.priors_for(hr_h, hr_w);

    std::function<bool(const std::string&)> frozen;
    if (cfg.freeze_sr || cfg.freeze_det)
        frozen = [&srnet, &det, &cfg](const std::string& name) {
            if (cfg.freeze_sr && name.rfind(srnet.prefix(), 0) == 0) return true;
            if (cfg.freeze_det && name.rfind(det.prefix(), 0) == 0) return true;
            return false;
        };

    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = finetune_stage_lr(epoch, cfg.lr, cfg.lr_decay_every, cfg.lr_decay);
        const auto order = detail::shuffled_indices(ds.size(), root.split(0xf7).split(epoch));
        double sum_total = 0.0, sum_loc = 0.0, sum_conf = 0.0;
        for (int step = 0; step < steps; ++step) {
            store.zero_grads();
            double batch_total = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const int sample_idx = order[(step * cfg.batch_size + b) % ds.size()];
                Sample sample = ds.samples[sample_idx];
                if (cfg.augment_data) {
                    Rng aug = root.split(0xa17).split(epoch).split(step).split(b);
                    sample = augment(sample, aug);
                }
                Graph<float> g(store);
                auto trace = srnet.forward(g, sample.lr_image);
                std::optional<InjectedFeatures<float>> ports;
                if (cfg.full_integration)
                    ports = det.adapt_features(g, trace.f_lr_out, trace.f_hr_out);
                auto maps = det.backbone_forward(g, trace.sr_image, ports);
                auto heads = det.heads_forward(g, maps);
                const MatchResult match =
                    match_priors(sample.boxes, sample.class_ids, priors, hr_w, hr_h, cfg.match_iou,
                                 det.config().variance_center, det.config().variance_size);
                auto mb = multibox_loss(heads.loc, heads.conf, match, cfg.neg_ratio);
                auto loss = mb.total;
                if (cfg.aux_l1_weight > 0.0)
                    loss = add_scalars(loss,
                                       scale_scalar(l1_loss(trace.sr_image, g.input(sample.hr_image)),
                                                    cfg.aux_l1_weight));
                loss = scale_scalar(loss, 1.0 / cfg.batch_size);
                g.backward(loss);
                batch_total += loss->value[0];
                sum_loc += mb.loc_term / cfg.batch_size;
                sum_conf += mb.conf_term / cfg.batch_size;
            }
            if (!std::isfinite(batch_total)) {
                result.diverged = true;
                return result;
            }
            opt.step(store, lr, frozen);
            sum_total += batch_total;
        }
        EpochLog log{epoch, lr, sum_total / steps, sum_loc / steps, sum_conf / steps};
        result.log.push_back(log);
        result.epochs_completed = epoch + 1;
        if (on_epoch) on_epoch(log);
    }
    return result;
}

/// Plain detector training on a fixed image source (HR frames or
/// bicubic-upsampled LR frames); the desk-scale substitute for an
/// externally pretrained detector.
struct DetTrainConfig {
    int epochs = 20;
    int batch_size = 8;
    double lr = 1e-3;
    int lr_decay_every = 10;
    double lr_decay = 0.1;
    std::uint64_t seed = 0;
    double match_iou = 0.5;
    double neg_ratio = 3.0;
    int steps_per_epoch = 0;
    bool augment_data = true;
};

inline TrainResult train_detector(const Dataset& ds, const Detector& det,
                                  const std::function<TensorF(const Sample&)>& image_of,
                                  ParameterStore<float>& store, Adam<float>& opt,
                                  const DetTrainConfig& cfg,
                                  const EpochCallback& on_epoch = nullptr) {
    if (ds.empty()) throw ValidationError("train_detector: empty training split");
    TrainResult result;
    const Rng root(cfg.seed);
    const int steps = detail::steps_per_epoch(ds, cfg.batch_size, cfg.steps_per_epoch);
    const int hr_h = ds.samples[0].hr_image.height();
    const int hr_w = ds.samples[0].hr_image.width();
    const auto priors = det.priors_for(hr_h, hr_w);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = finetune_stage_lr(epoch, cfg.lr, cfg.lr_decay_every, cfg.lr_decay);
        const auto order = detail::shuffled_indices(ds.size(), root.split(0xd37).split(epoch));
        double sum_total = 0.0, sum_loc = 0.0, sum_conf = 0.0;
        for (int step = 0; step < steps; ++step) {
            store.zero_grads();
            double batch_total = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const int sample_idx = order[(step * cfg.batch_size + b) % ds.size()];
                Sample sample = ds.samples[sample_idx];
                if (cfg.augment_data) {
                    Rng aug = root.split(0xa28).split(epoch).split(step).split(b);
                    sample = augment(sample, aug);
                }
                Graph<float> g(store);
                auto maps = det.backbone_forward<float>(g, g.input(image_of(sample)), std::nullopt);
                auto heads = det.heads_forward(g, maps);
                const MatchResult match =
                    match_priors(sample.boxes, sample.class_ids, priors, hr_w, hr_h, cfg.match_iou,
                                 det.config().variance_center, det.config().variance_size);
                auto mb = multibox_loss(heads.loc, heads.conf, match, cfg.neg_ratio);
                auto loss = scale_scalar(mb.total, 1.0 / cfg.batch_size);
                g.backward(loss);
                batch_total += loss->value[0];
                sum_loc += mb.loc_term / cfg.batch_size;
                sum_conf += mb.conf_term / cfg.batch_size;
            }
            if (!std::isfinite(batch_total)) {
                result.diverged = true;
                return result;
            }
            opt.step(store, lr);
            sum_total += batch_total;
        }
        EpochLog log{epoch, lr, sum_total / steps, sum_loc / steps, sum_conf / steps};
        result.log.push_back(log);
        result.epochs_completed = epoch + 1;
        if (on_epoch) on_epoch(log);
    }
    return result;
}

} // namespace srdet
