#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srdet/core/graph.hpp"
#include "srdet/core/ops.hpp"
#include "srdet/core/rng.hpp"
#include "srdet/det/box.hpp"
#include "srdet/det/nms.hpp"
#include "srdet/det/priors.hpp"
#include "srdet/sr/srnet.hpp"

namespace srdet {

struct BackboneStage {
    int convs = 2;
    int channels = 64;
};

/// Detector layout and inference thresholds. The default plan is the
/// VGG-16 conv stack; reduced plans keep the two injection ports at the
/// same relative positions (end of stage 1 at full resolution, end of
/// stage 3 at quarter resolution).
struct DetectorConfig {
    int num_classes = 1;
    std::vector<BackboneStage> stages = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    /// Output channels of the stride-2 encoder blocks appended after the
    /// backbone; consumed in order until head_maps maps exist.
    std::vector<int> encoder_channels = {512, 256, 256, 256, 256};
    int head_maps = 7;
    /// Feature width produced by the SR network (adapter input depth).
    int sr_channels = 64;
    bool inject = true;
    /// Add injected features after the activation of the port conv.
    bool inject_after_activation = true;
    AnchorConfig anchors{};
    double nms_iou = 0.45;
    double conf_threshold = 0.01;
    int nms_top_k = 200;
    double variance_center = 0.1;
    double variance_size = 0.2;

    int hr_port_channels() const { return stages[0].channels; }
    int lr_port_channels() const { return stages[2].channels; }

    void validate() const {
        if (stages.size() != 5) throw ValidationError("backbone needs exactly 5 stages");
        if (head_maps < 1) throw ValidationError("head map count must be >= 1");
        if (!(nms_iou > 0 && nms_iou < 1) || !(conf_threshold > 0 && conf_threshold < 1))
            throw ValidationError("detector thresholds must lie in (0,1)");
        if (num_classes < 1) throw ValidationError("need at least one class");
        for (const auto& s : stages)
            if (s.convs < 1 || s.channels < 1) throw ValidationError("bad backbone stage");
    }

    /// Pyramid map sizes for a square input; errors if the requested map
    /// count cannot be produced.
    std::vector<std::pair<int, int>> map_sizes(int input_h, int input_w) const {
        std::vector<std::pair<int, int>> sizes;
        int h = input_h / 8, w = input_w / 8; // stage 4 runs at 1/8 resolution
        sizes.emplace_back(h, w);
        h /= 2; w /= 2; // stage 5 after the fourth pool
        if (static_cast<int>(sizes.size()) < head_maps) sizes.emplace_back(h, w);
        while (static_cast<int>(sizes.size()) < head_maps) {
            h = (h + 1) / 2; w = (w + 1) / 2; // stride-2 encoder conv with pad 1
            sizes.emplace_back(h, w);
        }
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            const bool shrinking = i == 0 || (sizes[i].first < sizes[i - 1].first &&
                                              sizes[i].second < sizes[i - 1].second);
            if (sizes[i].first < 1 || sizes[i].second < 1 || !shrinking)
                throw ValidationError("input " + std::to_string(input_h) + "x" +
                                      std::to_string(input_w) + " too small for " +
                                      std::to_string(head_maps) +
                                      " strictly decreasing pyramid maps");
        }
        return sizes;
    }
};

/// Adapted SR features ready for injection.
template <typename T>
struct InjectedFeatures {
    Value<T> f_hr_ssd; // added after stage-1 (full resolution port)
    Value<T> f_lr_ssd; // added after stage-3 (quarter resolution port)
};

template <typename T>
struct HeadOutputs {
    Value<T> loc;  // (1, N_priors, 4)
    Value<T> conf; // (1, N_priors, num_classes+1)
};

/// SSD-style detector with a staged conv backbone, two feature-injection
/// ports, a stride-2 encoder extending the pyramid, and per-map detection
/// heads.
class Detector {
public:
    explicit Detector(DetectorConfig cfg, std::string prefix = "det/")
        : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
        cfg_.validate();
    }

    const DetectorConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    template <typename T>
    void init_params(ParameterStore<T>& store, Rng& rng) const {
        int in_ch = 3;
        for (std::size_t s = 0; s < cfg_.stages.size(); ++s)
            for (int c = 0; c < cfg_.stages[s].convs; ++c) {
                detail::init_conv(store, rng, conv_name(s, c), cfg_.stages[s].channels, in_ch, 3);
                in_ch = cfg_.stages[s].channels;
            }
        const int encoder_blocks = cfg_.head_maps - 2;
        for (int e = 0; e < encoder_blocks; ++e) {
            const int out_ch = encoder_channel(e);
            detail::init_conv(store, rng, enc_name(e) + ".squeeze", std::max(out_ch / 2, 1), in_ch, 1);
            detail::init_conv(store, rng, enc_name(e) + ".down", out_ch, std::max(out_ch / 2, 1), 3);
            in_ch = out_ch;
        }
        const int anchors = cfg_.anchors.anchors_per_cell();
        for (int m = 0; m < cfg_.head_maps; ++m) {
            const int ch = map_channels(m);
            detail::init_conv(store, rng, head_name(m) + ".loc", anchors * 4, ch, 3, 0.01);
            detail::init_conv(store, rng, head_name(m) + ".conf", anchors * (cfg_.num_classes + 1),
                              ch, 3, 0.01);
        }
    }

    /// Adapter convs start at zero so enabling injection is initially a
    /// no-op on the backbone features.
    template <typename T>
    void init_adapter_params(ParameterStore<T>& store) const {
        store.create(adapter_prefix() + "hr.w",
                     conv_weight_shape(cfg_.hr_port_channels(), cfg_.sr_channels, 3));
        store.create(adapter_prefix() + "hr.b", Shape{cfg_.hr_port_channels(), 1, 1});
        store.create(adapter_prefix() + "lr.w",
                     conv_weight_shape(cfg_.lr_port_channels(), cfg_.sr_channels, 3));
        store.create(adapter_prefix() + "lr.b", Shape{cfg_.lr_port_channels(), 1, 1});
    }

    /// Transition convolutions adjusting SR feature depth to the two port
    /// depths; spatial sizes unchanged.
    template <typename T>
    InjectedFeatures<T> adapt_features(Graph<T>& g, const Value<T>& f_lr_out,
                                       const Value<T>& f_hr_out) const {
        if (f_lr_out->value.channels() != cfg_.sr_channels ||
            f_hr_out->value.channels() != cfg_.sr_channels)
            throw ShapeError("adapter expects " + std::to_string(cfg_.sr_channels) +
                             "-channel SR features");
        InjectedFeatures<T> out;
        out.f_hr_ssd = conv2d(f_hr_out, g.param(adapter_prefix() + "hr.w"),
                              g.param(adapter_prefix() + "hr.b"), 1, 1);
        out.f_lr_ssd = conv2d(f_lr_out, g.param(adapter_prefix() + "lr.w"),
                              g.param(adapter_prefix() + "lr.b"), 1, 1);
        return out;
    }

    /// Staged conv stack with optional feature injection, followed by the
    /// encoder. Returns exactly head_maps maps of strictly decreasing size.
    template <typename T>
    std::vector<Value<T>> backbone_forward(Graph<T>& g, const Value<T>& image,
                                           const std::optional<InjectedFeatures<T>>& inject) const {
        const int in_h = image->value.height(), in_w = image->value.width();
        (void)cfg_.map_sizes(in_h, in_w); // validates feasibility up front

        std::optional<InjectedFeatures<T>> ports = inject;
        if (ports) {
            check_port(*ports, in_h, in_w);
            // Resize the quarter-resolution port when the SR upscale factor
            // is not 4 (its features then live at a different grid).
            if (ports->f_lr_ssd->value.height() != in_h / 4 ||
                ports->f_lr_ssd->value.width() != in_w / 4)
                ports->f_lr_ssd = resize_bicubic(ports->f_lr_ssd, in_h / 4, in_w / 4);
        }

        std::vector<Value<T>> maps;
        auto cur = image;
        for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
            for (int c = 0; c < cfg_.stages[s].convs; ++c) {
                auto pre = conv2d(cur, g.param(conv_name(s, c) + ".w"),
                                  g.param(conv_name(s, c) + ".b"), 1, 1);
                const bool last = c == cfg_.stages[s].convs - 1;
                const Value<T>* port = nullptr;
                if (ports && last && s == 0) port = &ports->f_hr_ssd;
                if (ports && last && s == 2) port = &ports->f_lr_ssd;
                if (port && !cfg_.inject_after_activation) pre = add(pre, *port);
                cur = relu(pre);
                if (port && cfg_.inject_after_activation) cur = add(cur, *port);
            }
            if (s == 3) maps.push_back(cur);
            if (s + 1 < cfg_.stages.size()) cur = max_pool2(cur);
        }
        if (static_cast<int>(maps.size()) < cfg_.head_maps) maps.push_back(cur);

        for (int e = 0; static_cast<int>(maps.size()) < cfg_.head_maps; ++e) {
            cur = relu(conv2d(cur, g.param(enc_name(e) + ".squeeze.w"),
                              g.param(enc_name(e) + ".squeeze.b")));
            cur = relu(conv2d(cur, g.param(enc_name(e) + ".down.w"),
                              g.param(enc_name(e) + ".down.b"), 2, 1));
            maps.push_back(cur);
        }
        return maps;
    }

    /// Per-map 3x3 loc/conf convs, flattened in prior order.
    template <typename T>
    HeadOutputs<T> heads_forward(Graph<T>& g, const std::vector<Value<T>>& maps) const {
        if (static_cast<int>(maps.size()) != cfg_.head_maps)
            throw ShapeError("heads expect " + std::to_string(cfg_.head_maps) + " maps, got " +
                             std::to_string(maps.size()));
        std::vector<Value<T>> locs, confs;
        for (int m = 0; m < cfg_.head_maps; ++m) {
            auto loc = conv2d(maps[m], g.param(head_name(m) + ".loc.w"),
                              g.param(head_name(m) + ".loc.b"), 1, 1);
            auto conf = conv2d(maps[m], g.param(head_name(m) + ".conf.w"),
                               g.param(head_name(m) + ".conf.b"), 1, 1);
            locs.push_back(flatten_anchors(loc, 4));
            confs.push_back(flatten_anchors(conf, cfg_.num_classes + 1));
        }
        return HeadOutputs<T>{concat_rows(locs), concat_rows(confs)};
    }

    std::vector<PriorBox> priors_for(int input_h, int input_w) const {
        return generate_priors(cfg_.anchors, cfg_.map_sizes(input_h, input_w));
    }

    /// Full pipeline on an image: backbone, heads, softmax, confidence
    /// filter, decode, fast NMS. Deterministic for fixed weights.
    template <typename T>
    std::vector<Detection> detect(Graph<T>& g, const Tensor<T>& image,
                                  const std::optional<InjectedFeatures<T>>& inject) const {
        auto maps = backbone_forward(g, g.input(image), inject);
        auto heads = heads_forward(g, maps);
        const auto priors = priors_for(image.height(), image.width());
        return decode_detections(heads.loc->value, heads.conf->value, priors, image.width(),
                                 image.height());
    }

    /// Post-network half of detect(); shared with training-time eval where
    /// the graph is built by the caller.
    template <typename T>
    std::vector<Detection> decode_detections(const Tensor<T>& loc, const Tensor<T>& conf,
                                             const std::vector<PriorBox>& priors, double img_w,
                                             double img_h) const {
        const int n = loc.height();
        if (n != static_cast<int>(priors.size()) || conf.height() != n)
            throw ShapeError("head rows " + std::to_string(n) + " != prior count " +
                             std::to_string(priors.size()));
        const int columns = cfg_.num_classes + 1;
        std::vector<Detection> candidates;
        std::vector<double> probs(columns);
        for (int i = 0; i < n; ++i) {
            const T* row = conf.row(0, i);
            double mx = static_cast<double>(row[0]);
            for (int c = 1; c < columns; ++c) mx = std::max(mx, static_cast<double>(row[c]));
            double denom = 0.0;
            for (int c = 0; c < columns; ++c) {
                probs[c] = std::exp(static_cast<double>(row[c]) - mx);
                denom += probs[c];
            }
            bool decoded = false;
            Box box;
            for (int c = 1; c < columns; ++c) {
                const double score = probs[c] / denom;
                if (score <= cfg_.conf_threshold) continue;
                if (!decoded) {
                    const T* lrow = loc.row(0, i);
                    box = decode_box({static_cast<double>(lrow[0]), static_cast<double>(lrow[1]),
                                      static_cast<double>(lrow[2]), static_cast<double>(lrow[3])},
                                     priors[i], cfg_.variance_center, cfg_.variance_size, img_w,
                                     img_h);
                    box = box.clipped(img_w, img_h);
                    decoded = true;
                }
                if (box.valid()) candidates.push_back(Detection{box, c - 1, score});
            }
        }
        return fast_nms(candidates, cfg_.nms_iou, cfg_.nms_top_k);
    }

    std::string conv_name(std::size_t stage, int conv) const {
        return prefix_ + "s" + std::to_string(stage + 1) + ".c" + std::to_string(conv);
    }
    std::string enc_name(int block) const { return prefix_ + "enc" + std::to_string(block); }
    std::string head_name(int map) const { return prefix_ + "head" + std::to_string(map); }
    std::string adapter_prefix() const { return "adapt/"; }

    int map_channels(int m) const {
        if (m == 0) return cfg_.stages[3].channels;
        if (m == 1) return cfg_.stages[4].channels;
        return encoder_channel(m - 2);
    }

private:
    int encoder_channel(int e) const {
        if (cfg_.encoder_channels.empty()) throw ValidationError("encoder channel plan empty");
        return cfg_.encoder_channels[std::min<std::size_t>(e, cfg_.encoder_channels.size() - 1)];
    }

    template <typename T>
    void check_port(const InjectedFeatures<T>& ports, int in_h, int in_w) const {
        const auto& hs = ports.f_hr_ssd->value.shape();
        if (hs.c != cfg_.hr_port_channels() || hs.h != in_h || hs.w != in_w)
            throw ShapeError("hr injection port expects (" +
                             std::to_string(cfg_.hr_port_channels()) + "," + std::to_string(in_h) +
                             "," + std::to_string(in_w) + "), got " + hs.str());
        const auto& ls = ports.f_lr_ssd->value.shape();
        if (ls.c != cfg_.lr_port_channels())
            throw ShapeError("lr injection port expects " +
                             std::to_string(cfg_.lr_port_channels()) + " channels, got " +
                             ls.str());
    }

    DetectorConfig cfg_;
    std::string prefix_;
};

} // namespace srdet
