#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "srdet/core/errors.hpp"
#include "srdet/data/pairs.hpp"
#include "srdet/data/synth.hpp"
#include "srdet/det/detector.hpp"
#include "srdet/sr/srnet.hpp"
#include "srdet/train/trainer.hpp"

namespace srdet {

/// Full declarative experiment description. Defaults are the paper-scale
/// values (batch 4, lr 1e-4, 450/24 epochs, alpha 4, IoU 0.5); desk-scale
/// runs override sizes and budgets through the config file or CLI flags.
struct ExperimentConfig {
    struct DatasetSection {
        std::string root = "data/synth";
        std::string classes = "ship";
        int normalize_size = 1024;
        int synth_train_count = 200;
        int synth_test_count = 50;
        int synth_canvas = 256;
        int synth_ships_min = 1;
        int synth_ships_max = 3;
        double synth_ship_len_min = 0.14;
        double synth_ship_len_max = 0.32;
        int synth_noise_octaves = 3;
        double synth_noise_sigma = 0.008;
        std::uint64_t synth_seed = 1;
    } dataset;

    struct ModelSection {
        int alpha = 4;
        int sr_num_blocks = 8;
        int sr_base_channels = 64;
        int sr_rdb_layers = 5;
        int sr_growth = 32;
        std::string det_stages = "2x64,2x128,3x256,3x512,3x512";
        std::string det_encoder_channels = "512,256,256,256,256";
        int det_head_maps = 7;
        double det_nms_iou = 0.45;
        double det_conf_threshold = 0.01;
        int det_nms_top_k = 200;
        double det_variance_center = 0.1;
        double det_variance_size = 0.2;
        double anchor_scale_min = 0.1;
        double anchor_scale_max = 0.9;
        std::string anchor_aspect_ratios = "1,2,0.5";
        bool anchor_geometric_mean = true;
        bool inject_after_activation = true;
    } model;

    struct TrainSection {
        int batch_size = 4;
        double lr = 1e-4;
        int sr_epochs = 450;
        int sr_lr_halve_every = 200;
        int ft_epochs = 24;
        int ft_lr_decay_every = 10;
        double ft_lr_decay = 0.1;
        int det_epochs = 20;
        double det_lr = 1e-3;
        int det_batch_size = 8;
        std::uint64_t seed = 0;
        int steps_per_epoch = 0;
        bool augment = true;
        double aux_l1_weight = 0.0;
        bool freeze_sr = false;
        bool freeze_det = false;
        double match_iou = 0.5;
        double neg_ratio = 3.0;
        int checkpoint_every = 0;
    } train;

    struct EvalSection {
        double iou_threshold = 0.5;
        bool eleven_point = false;
        int latency_warmup = 3;
        int latency_iterations = 10;
    } eval;

    std::string variant = "ShipSRDet";

    // ----- derived sub-configs -----

    std::vector<std::string> class_names() const {
        std::vector<std::string> out;
        std::stringstream ss(dataset.classes);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(item);
        if (out.empty()) throw ConfigError("dataset.classes must name at least one class");
        return out;
    }

    SrNetConfig sr_config() const {
        SrNetConfig cfg;
        cfg.num_blocks = model.sr_num_blocks;
        cfg.base_channels = model.sr_base_channels;
        cfg.alpha = model.alpha;
        cfg.rdb.num_layers = model.sr_rdb_layers;
        cfg.rdb.growth = model.sr_growth;
        cfg.rdb.base_channels = model.sr_base_channels;
        return cfg;
    }

    DetectorConfig det_config() const {
        DetectorConfig cfg;
        cfg.num_classes = static_cast<int>(class_names().size());
        cfg.stages.clear();
        for (const std::string& part : split_list(model.det_stages)) {
            const auto x = part.find('x');
            if (x == std::string::npos)
                throw ConfigError("model.det.stages entries must look like '2x64', got '" + part +
                                  "'");
            cfg.stages.push_back(
                BackboneStage{parse_int(part.substr(0, x), "model.det.stages"),
                              parse_int(part.substr(x + 1), "model.det.stages")});
        }
        cfg.encoder_channels.clear();
        for (const std::string& part : split_list(model.det_encoder_channels))
            cfg.encoder_channels.push_back(parse_int(part, "model.det.encoder_channels"));
        cfg.head_maps = model.det_head_maps;
        cfg.sr_channels = model.sr_base_channels;
        cfg.nms_iou = model.det_nms_iou;
        cfg.conf_threshold = model.det_conf_threshold;
        cfg.nms_top_k = model.det_nms_top_k;
        cfg.variance_center = model.det_variance_center;
        cfg.variance_size = model.det_variance_size;
        cfg.inject_after_activation = model.inject_after_activation;
        cfg.anchors.scale_min = model.anchor_scale_min;
        cfg.anchors.scale_max = model.anchor_scale_max;
        cfg.anchors.aspect_ratios.clear();
        for (const std::string& part : split_list(model.anchor_aspect_ratios))
            cfg.anchors.aspect_ratios.push_back(parse_double(part, "model.anchor.aspect_ratios"));
        cfg.anchors.geometric_mean_anchor = model.anchor_geometric_mean;
        cfg.validate();
        return cfg;
    }

    SynthConfig synth_config(bool test_split) const {
        SynthConfig cfg;
        cfg.image_count = test_split ? dataset.synth_test_count : dataset.synth_train_count;
        cfg.canvas = dataset.synth_canvas;
        cfg.ships_min = dataset.synth_ships_min;
        cfg.ships_max = dataset.synth_ships_max;
        cfg.ship_len_min = dataset.synth_ship_len_min;
        cfg.ship_len_max = dataset.synth_ship_len_max;
        cfg.noise_octaves = dataset.synth_noise_octaves;
        cfg.noise_sigma = dataset.synth_noise_sigma;
        cfg.seed = dataset.synth_seed;
        return cfg;
    }

    PairConfig pair_config() const {
        PairConfig cfg;
        cfg.normalize_size = dataset.normalize_size;
        cfg.alpha = model.alpha;
        return cfg;
    }

    SrTrainConfig sr_train_config() const {
        SrTrainConfig cfg;
        cfg.epochs = train.sr_epochs;
        cfg.batch_size = train.batch_size;
        cfg.lr = train.lr;
        cfg.lr_halve_every = train.sr_lr_halve_every;
        cfg.seed = train.seed;
        cfg.steps_per_epoch = train.steps_per_epoch;
        cfg.augment_data = train.augment;
        return cfg;
    }

    FinetuneConfig finetune_config(bool full_integration) const {
        FinetuneConfig cfg;
        cfg.epochs = train.ft_epochs;
        cfg.batch_size = train.batch_size;
        cfg.lr = train.lr;
        cfg.lr_decay_every = train.ft_lr_decay_every;
        cfg.lr_decay = train.ft_lr_decay;
        cfg.seed = train.seed;
        cfg.full_integration = full_integration;
        cfg.aux_l1_weight = train.aux_l1_weight;
        cfg.freeze_sr = train.freeze_sr;
        cfg.freeze_det = train.freeze_det;
        cfg.match_iou = train.match_iou;
        cfg.neg_ratio = train.neg_ratio;
        cfg.steps_per_epoch = train.steps_per_epoch;
        cfg.augment_data = train.augment;
        return cfg;
    }

    DetTrainConfig det_train_config() const {
        DetTrainConfig cfg;
        cfg.epochs = train.det_epochs;
        cfg.batch_size = train.det_batch_size;
        cfg.lr = train.det_lr;
        cfg.seed = train.seed;
        cfg.match_iou = train.match_iou;
        cfg.neg_ratio = train.neg_ratio;
        cfg.steps_per_epoch = train.steps_per_epoch;
        cfg.augment_data = train.augment;
        return cfg;
    }

    void validate() const {
        if (model.alpha < 1) throw ConfigError("model.alpha must be >= 1");
        if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (!(eval.iou_threshold > 0 && eval.iou_threshold < 1))
            throw ConfigError("eval.iou_threshold must lie in (0,1)");
        if (dataset.normalize_size % (2 * model.alpha) != 0)
            throw ConfigError("dataset.normalize_size must be divisible by 2*alpha");
        (void)sr_config();
        (void)det_config();
    }

    static int parse_int(const std::string& s, const std::string& what) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(what + ": expected an integer, got '" + s + "'");
        }
    }

    static double parse_double(const std::string& s, const std::string& what) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(what + ": expected a number, got '" + s + "'");
        }
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(item);
        return out;
    }
};

namespace detail {

struct ConfigKey {
    std::string name;
    std::function<void(ExperimentConfig&, const std::string&, int line)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline bool parse_bool(const std::string& s, const std::string& key, int line) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' expects a boolean, got '" + s + "'");
}

template <typename Ref>
void add_int(std::vector<ConfigKey>& keys, const std::string& name, Ref ref) {
    keys.push_back(ConfigKey{
        name,
        [ref, name](ExperimentConfig& c, const std::string& v, int line) {
            try {
                std::size_t used = 0;
                ref(c) = std::stoi(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(line) + ": key '" + name +
                                  "' expects an integer, got '" + v + "'");
            }
        },
        [ref](const ExperimentConfig& c) {
            return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
        }});
}

template <typename Ref>
void add_u64(std::vector<ConfigKey>& keys, const std::string& name, Ref ref) {
    keys.push_back(ConfigKey{
        name,
        [ref, name](ExperimentConfig& c, const std::string& v, int line) {
            try {
                std::size_t used = 0;
                ref(c) = std::stoull(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(line) + ": key '" + name +
                                  "' expects an unsigned integer, got '" + v + "'");
            }
        },
        [ref](const ExperimentConfig& c) {
            return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
        }});
}

template <typename Ref>
void add_double(std::vector<ConfigKey>& keys, const std::string& name, Ref ref) {
    keys.push_back(ConfigKey{
        name,
        [ref, name](ExperimentConfig& c, const std::string& v, int line) {
            try {
                std::size_t used = 0;
                ref(c) = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("line " + std::to_string(line) + ": key '" + name +
                                  "' expects a number, got '" + v + "'");
            }
        },
        [ref](const ExperimentConfig& c) {
            return format_double(ref(const_cast<ExperimentConfig&>(c)));
        }});
}

template <typename Ref>
void add_bool(std::vector<ConfigKey>& keys, const std::string& name, Ref ref) {
    keys.push_back(ConfigKey{name,
                             [ref, name](ExperimentConfig& c, const std::string& v, int line) {
                                 ref(c) = parse_bool(v, name, line);
                             },
                             [ref](const ExperimentConfig& c) {
                                 return ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
                             }});
}

template <typename Ref>
void add_string(std::vector<ConfigKey>& keys, const std::string& name, Ref ref) {
    keys.push_back(ConfigKey{
        name,
        [ref](ExperimentConfig& c, const std::string& v, int) { ref(c) = v; },
        [ref](const ExperimentConfig& c) { return ref(const_cast<ExperimentConfig&>(c)); }});
}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto D = [](auto member) {
            return [member](ExperimentConfig& c) -> decltype(auto) { return c.dataset.*member; };
        };
        auto M = [](auto member) {
            return [member](ExperimentConfig& c) -> decltype(auto) { return c.model.*member; };
        };
        auto T = [](auto member) {
            return [member](ExperimentConfig& c) -> decltype(auto) { return c.train.*member; };
        };
        auto E = [](auto member) {
            return [member](ExperimentConfig& c) -> decltype(auto) { return c.eval.*member; };
        };
        using C = ExperimentConfig;

        add_string(k, "dataset.root", D(&C::DatasetSection::root));
        add_string(k, "dataset.classes", D(&C::DatasetSection::classes));
        add_int(k, "dataset.normalize_size", D(&C::DatasetSection::normalize_size));
        add_int(k, "dataset.synth.train_count", D(&C::DatasetSection::synth_train_count));
        add_int(k, "dataset.synth.test_count", D(&C::DatasetSection::synth_test_count));
        add_int(k, "dataset.synth.canvas", D(&C::DatasetSection::synth_canvas));
        add_int(k, "dataset.synth.ships_min", D(&C::DatasetSection::synth_ships_min));
        add_int(k, "dataset.synth.ships_max", D(&C::DatasetSection::synth_ships_max));
        add_double(k, "dataset.synth.ship_len_min", D(&C::DatasetSection::synth_ship_len_min));
        add_double(k, "dataset.synth.ship_len_max", D(&C::DatasetSection::synth_ship_len_max));
        add_int(k, "dataset.synth.noise_octaves", D(&C::DatasetSection::synth_noise_octaves));
        add_double(k, "dataset.synth.noise_sigma", D(&C::DatasetSection::synth_noise_sigma));
        add_u64(k, "dataset.synth.seed", D(&C::DatasetSection::synth_seed));

        add_int(k, "model.alpha", M(&C::ModelSection::alpha));
        add_int(k, "model.sr.num_blocks", M(&C::ModelSection::sr_num_blocks));
        add_int(k, "model.sr.base_channels", M(&C::ModelSection::sr_base_channels));
        add_int(k, "model.sr.rdb_layers", M(&C::ModelSection::sr_rdb_layers));
        add_int(k, "model.sr.growth", M(&C::ModelSection::sr_growth));
        add_string(k, "model.det.stages", M(&C::ModelSection::det_stages));
        add_string(k, "model.det.encoder_channels", M(&C::ModelSection::det_encoder_channels));
        add_int(k, "model.det.head_maps", M(&C::ModelSection::det_head_maps));
        add_double(k, "model.det.nms_iou", M(&C::ModelSection::det_nms_iou));
        add_double(k, "model.det.conf_threshold", M(&C::ModelSection::det_conf_threshold));
        add_int(k, "model.det.nms_top_k", M(&C::ModelSection::det_nms_top_k));
        add_double(k, "model.det.variance_center", M(&C::ModelSection::det_variance_center));
        add_double(k, "model.det.variance_size", M(&C::ModelSection::det_variance_size));
        add_double(k, "model.anchor.scale_min", M(&C::ModelSection::anchor_scale_min));
        add_double(k, "model.anchor.scale_max", M(&C::ModelSection::anchor_scale_max));
        add_string(k, "model.anchor.aspect_ratios", M(&C::ModelSection::anchor_aspect_ratios));
        add_bool(k, "model.anchor.geometric_mean", M(&C::ModelSection::anchor_geometric_mean));
        add_bool(k, "model.inject_after_activation",
                 M(&C::ModelSection::inject_after_activation));

        add_int(k, "train.batch_size", T(&C::TrainSection::batch_size));
        add_double(k, "train.lr", T(&C::TrainSection::lr));
        add_int(k, "train.sr_epochs", T(&C::TrainSection::sr_epochs));
        add_int(k, "train.sr_lr_halve_every", T(&C::TrainSection::sr_lr_halve_every));
        add_int(k, "train.ft_epochs", T(&C::TrainSection::ft_epochs));
        add_int(k, "train.ft_lr_decay_every", T(&C::TrainSection::ft_lr_decay_every));
        add_double(k, "train.ft_lr_decay", T(&C::TrainSection::ft_lr_decay));
        add_int(k, "train.det_epochs", T(&C::TrainSection::det_epochs));
        add_double(k, "train.det_lr", T(&C::TrainSection::det_lr));
        add_int(k, "train.det_batch_size", T(&C::TrainSection::det_batch_size));
        add_u64(k, "train.seed", T(&C::TrainSection::seed));
        add_int(k, "train.steps_per_epoch", T(&C::TrainSection::steps_per_epoch));
        add_bool(k, "train.augment", T(&C::TrainSection::augment));
        add_double(k, "train.aux_l1_weight", T(&C::TrainSection::aux_l1_weight));
        add_bool(k, "train.freeze_sr", T(&C::TrainSection::freeze_sr));
        add_bool(k, "train.freeze_det", T(&C::TrainSection::freeze_det));
        add_double(k, "train.match_iou", T(&C::TrainSection::match_iou));
        add_double(k, "train.neg_ratio", T(&C::TrainSection::neg_ratio));
        add_int(k, "train.checkpoint_every", T(&C::TrainSection::checkpoint_every));

        add_double(k, "eval.iou_threshold", E(&C::EvalSection::iou_threshold));
        add_bool(k, "eval.eleven_point", E(&C::EvalSection::eleven_point));
        add_int(k, "eval.latency_warmup", E(&C::EvalSection::latency_warmup));
        add_int(k, "eval.latency_iterations", E(&C::EvalSection::latency_iterations));

        add_string(k, "variant",
                   [](ExperimentConfig& c) -> std::string& { return c.variant; });
        return k;
    }();
    return keys;
}

inline int levenshtein(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string nearest_key(const std::string& key) {
    int best = 1 << 30;
    std::string name;
    for (const auto& k : config_keys()) {
        const int d = levenshtein(key, k.name);
        if (d < best) {
            best = d;
            name = k.name;
        }
    }
    return name;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

} // namespace detail

/// Parses key = value lines into a default-initialized config. Supports
/// `[section]` headers as key prefixes and `#` comments. Unknown keys name
/// the nearest valid key; malformed lines and type mismatches cite their
/// line number.
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!section.empty()) key = section + "." + key;

        bool found = false;
        for (const auto& k : detail::config_keys())
            if (k.name == key) {
                k.set(cfg, value, line_no);
                found = true;
                break;
            }
        if (!found)
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key +
                              "' (nearest valid key: '" + detail::nearest_key(key) + "')");
    }
    return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(buf.str());
    cfg.validate();
    return cfg;
}

/// Canonical serialization: every key, sorted, one per line. A run
/// directory snapshot written this way reproduces the experiment exactly.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& k : detail::config_keys()) kv.emplace_back(k.name, k.get(cfg));
    std::sort(kv.begin(), kv.end());
    std::ostringstream os;
    for (const auto& [name, value] : kv) os << name << " = " << value << "\n";
    return os.str();
}

} // namespace srdet
