#pragma once

#include <string>
#include <vector>

#include "srdet/core/graph.hpp"
#include "srdet/core/ops.hpp"
#include "srdet/core/rng.hpp"

namespace srdet {

/// Residual dense block: each 3x3 conv consumes the concatenation of the
/// block input and all prior layer outputs; a 1x1 conv fuses the full
/// concatenation back to base width, then the block input is added.
struct RdbConfig {
    int num_layers = 5;
    int growth = 32;
    int base_channels = 64;

    int fusion_width() const { return base_channels + num_layers * growth; }
};

struct SrNetConfig {
    int num_blocks = 8;
    int base_channels = 64;
    int alpha = 4; // upscale factor
    RdbConfig rdb{};

    void validate() const {
        if (num_blocks < 1 || base_channels < 1 || alpha < 1 || rdb.num_layers < 1 ||
            rdb.growth < 1)
            throw ValidationError("sr config values must be positive");
        if (rdb.base_channels != base_channels)
            throw ValidationError("rdb base channels must match network base channels");
    }
};

/// Forward products exposed to the detector: the initial feature, the
/// globally fused low-resolution feature, the upsampled feature, and the
/// SR image itself.
template <typename T>
struct SrTrace {
    Value<T> f0;
    Value<T> f_lr_out;
    Value<T> f_hr_out;
    Value<T> sr_image;
};

namespace detail {

/// Fan-in scaled initialization; biases start at zero. gain 2 suits convs
/// followed by ReLU, gain 1 keeps linear convs variance-preserving.
template <typename T>
void init_conv(ParameterStore<T>& store, Rng& rng, const std::string& name, int out_ch, int in_ch,
               int k, double stddev_override = -1.0, double gain = 2.0) {
    const double stddev =
        stddev_override >= 0.0 ? stddev_override : std::sqrt(gain / (in_ch * k * k));
    Tensor<T> w(conv_weight_shape(out_ch, in_ch, k));
    for (auto& v : w) v = static_cast<T>(rng.normal(0.0, stddev));
    store.add(name + ".w", std::move(w));
    store.create(name + ".b", Shape{out_ch, 1, 1});
}

inline std::size_t conv_param_count(int out_ch, int in_ch, int k) {
    return static_cast<std::size_t>(out_ch) * in_ch * k * k + out_ch;
}

} // namespace detail

/// Image SR network: initial 3x3 conv, cascaded RDBs, 1x1 global fusion
/// over the concatenated block outputs, residual addition of the initial
/// feature, expansion conv + sub-pixel upsampling, and a final 3x3 conv
/// predicting the residual over the bicubicly upsampled input.
class SrNet {
public:
    explicit SrNet(SrNetConfig cfg, std::string prefix = "sr/") : cfg_(cfg), prefix_(std::move(prefix)) {
        cfg_.validate();
    }

    const SrNetConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    template <typename T>
    void init_params(ParameterStore<T>& store, Rng& rng) const {
        const int bc = cfg_.base_channels;
        detail::init_conv(store, rng, prefix_ + "f0", bc, 3, 3, -1.0, 1.0);
        for (int b = 0; b < cfg_.num_blocks; ++b) {
            const std::string rp = prefix_ + "rdb" + std::to_string(b) + ".";
            for (int l = 0; l < cfg_.rdb.num_layers; ++l)
                detail::init_conv(store, rng, rp + "c" + std::to_string(l), cfg_.rdb.growth,
                                  bc + l * cfg_.rdb.growth, 3);
            detail::init_conv(store, rng, rp + "fuse", bc, cfg_.rdb.fusion_width(), 1, -1.0, 1.0);
        }
        detail::init_conv(store, rng, prefix_ + "gfuse", bc, cfg_.num_blocks * bc, 1, -1.0, 1.0);
        detail::init_conv(store, rng, prefix_ + "up", bc * cfg_.alpha * cfg_.alpha, bc, 3, -1.0, 1.0);
        // Near-zero residual conv: the initial SR output starts at the
        // bicubic interpolation.
        detail::init_conv(store, rng, prefix_ + "res", 3, bc, 3, 1e-5);
    }

    std::size_t param_count() const {
        const int bc = cfg_.base_channels;
        std::size_t per_block = 0;
        for (int l = 0; l < cfg_.rdb.num_layers; ++l)
            per_block += detail::conv_param_count(cfg_.rdb.growth, bc + l * cfg_.rdb.growth, 3);
        per_block += detail::conv_param_count(bc, cfg_.rdb.fusion_width(), 1);
        std::size_t n = detail::conv_param_count(bc, 3, 3) + per_block * cfg_.num_blocks;
        n += detail::conv_param_count(bc, cfg_.num_blocks * bc, 1);
        n += detail::conv_param_count(bc * cfg_.alpha * cfg_.alpha, bc, 3);
        n += detail::conv_param_count(3, bc, 3);
        return n;
    }

    /// One RDB: growth convs with ReLU, 1x1 local fusion, local residual.
    template <typename T>
    Value<T> rdb_forward(Graph<T>& g, const Value<T>& in, int block) const {
        if (in->value.channels() != cfg_.base_channels)
            throw ShapeError("rdb input channels " + std::to_string(in->value.channels()) +
                             " != base " + std::to_string(cfg_.base_channels));
        const std::string rp = prefix_ + "rdb" + std::to_string(block) + ".";
        std::vector<Value<T>> feats{in};
        for (int l = 0; l < cfg_.rdb.num_layers; ++l) {
            auto cat = feats.size() == 1 ? feats[0] : concat_channels(feats);
            auto y = relu(conv2d(cat, g.param(rp + "c" + std::to_string(l) + ".w"),
                                 g.param(rp + "c" + std::to_string(l) + ".b"), 1, 1));
            feats.push_back(y);
        }
        auto fused = conv2d(concat_channels(feats), g.param(rp + "fuse.w"), g.param(rp + "fuse.b"));
        return add(fused, in);
    }

    /// Full forward trace from a low-resolution image.
    template <typename T>
    SrTrace<T> forward(Graph<T>& g, const Tensor<T>& i_lr, bool check_finite = false) const {
        if (i_lr.channels() != 3) throw ShapeError("sr input must have 3 channels");
        if (i_lr.height() < 8 || i_lr.width() < 8)
            throw ValidationError("sr input must be at least 8x8");

        auto x = g.input(i_lr);
        SrTrace<T> trace;
        trace.f0 = conv2d(x, g.param(prefix_ + "f0.w"), g.param(prefix_ + "f0.b"), 1, 1);
        if (check_finite) trace.f0->value.require_finite(prefix_ + "f0");

        std::vector<Value<T>> block_outs;
        auto cur = trace.f0;
        for (int b = 0; b < cfg_.num_blocks; ++b) {
            cur = rdb_forward(g, cur, b);
            if (check_finite) cur->value.require_finite(prefix_ + "rdb" + std::to_string(b));
            block_outs.push_back(cur);
        }

        trace.f_lr_out = conv2d(concat_channels(block_outs), g.param(prefix_ + "gfuse.w"),
                                g.param(prefix_ + "gfuse.b"));
        auto fused = add(trace.f_lr_out, trace.f0);
        auto expanded = conv2d(fused, g.param(prefix_ + "up.w"), g.param(prefix_ + "up.b"), 1, 1);
        trace.f_hr_out = pixel_shuffle(expanded, cfg_.alpha);
        if (check_finite) trace.f_hr_out->value.require_finite(prefix_ + "up");

        auto residual =
            conv2d(trace.f_hr_out, g.param(prefix_ + "res.w"), g.param(prefix_ + "res.b"), 1, 1);
        auto upsampled = g.input(bicubic_resize(i_lr, static_cast<double>(cfg_.alpha)));
        trace.sr_image = add(residual, upsampled);
        if (check_finite) trace.sr_image->value.require_finite(prefix_ + "res");
        return trace;
    }

private:
    SrNetConfig cfg_;
    std::string prefix_;
};

} // namespace srdet
