#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "srdet/core/resample.hpp"
#include "srdet/data/sample.hpp"
#include "srdet/det/detector.hpp"
#include "srdet/sr/srnet.hpp"

namespace srdet {

/// The five network variants of the ablation study. Names are the exact
/// row labels used in reports and CSV output.
enum class Variant { BicubicSsd, SrnetSsd, SrnetSsdFt, ShipSrDet, HrSsd };

inline const std::vector<std::pair<Variant, std::string>>& variant_names() {
    static const std::vector<std::pair<Variant, std::string>> names = {
        {Variant::BicubicSsd, "Bicubic+SSD"},
        {Variant::SrnetSsd, "SRnet+SSD"},
        {Variant::SrnetSsdFt, "(SRnet+SSD)_ft"},
        {Variant::ShipSrDet, "ShipSRDet"},
        {Variant::HrSsd, "HR+SSD"},
    };
    return names;
}

inline std::string variant_name(Variant v) {
    for (const auto& [var, name] : variant_names())
        if (var == v) return name;
    throw ValidationError("unknown variant");
}

inline Variant variant_from_name(const std::string& name) {
    for (const auto& [var, vname] : variant_names())
        if (vname == name) return var;
    std::string known;
    for (const auto& [var, vname] : variant_names()) known += " '" + vname + "'";
    throw ConfigError("unknown variant '" + name + "'; expected one of" + known);
}

/// Whether the variant runs the SR network, and whether it injects
/// adapted SR features into the detector.
inline bool variant_uses_sr(Variant v) {
    return v == Variant::SrnetSsd || v == Variant::SrnetSsdFt || v == Variant::ShipSrDet;
}
inline bool variant_uses_injection(Variant v) { return v == Variant::ShipSrDet; }

/// Runs one variant's inference path on an LR/HR pair and returns
/// detections in HR pixel coordinates.
inline std::vector<Detection> variant_detect(Variant v, const SrNet& srnet, const Detector& det,
                                             ParameterStore<float>& store, const Sample& sample) {
    Graph<float> g(store, /*trainable=*/false);
    switch (v) {
    case Variant::BicubicSsd: {
        const TensorF up = bicubic_resize(sample.lr_image, static_cast<double>(srnet.config().alpha));
        return det.detect<float>(g, up, std::nullopt);
    }
    case Variant::HrSsd:
        return det.detect<float>(g, sample.hr_image, std::nullopt);
    case Variant::SrnetSsd:
    case Variant::SrnetSsdFt: {
        auto trace = srnet.forward(g, sample.lr_image);
        return det.detect<float>(g, trace.sr_image->value, std::nullopt);
    }
    case Variant::ShipSrDet: {
        auto trace = srnet.forward(g, sample.lr_image);
        auto ports = det.adapt_features(g, trace.f_lr_out, trace.f_hr_out);
        return det.detect<float>(g, trace.sr_image->value, std::optional(ports));
    }
    }
    throw ValidationError("unknown variant");
}

/// Per-image inference closure for latency measurement. SR-based variants
/// consume the LR frame, HR+SSD consumes the HR frame directly.
inline std::function<void()> variant_latency_fn(Variant v, const SrNet& srnet, const Detector& det,
                                                ParameterStore<float>& store, TensorF lr_image,
                                                TensorF hr_image) {
    return [v, &srnet, &det, &store, lr = std::move(lr_image), hr = std::move(hr_image)] {
        Graph<float> g(store, false);
        switch (v) {
        case Variant::BicubicSsd: {
            const TensorF up = bicubic_resize(lr, static_cast<double>(srnet.config().alpha));
            det.detect<float>(g, up, std::nullopt);
            return;
        }
        case Variant::HrSsd:
            det.detect<float>(g, hr, std::nullopt);
            return;
        case Variant::SrnetSsd:
        case Variant::SrnetSsdFt: {
            auto trace = srnet.forward(g, lr);
            det.detect<float>(g, trace.sr_image->value, std::nullopt);
            return;
        }
        case Variant::ShipSrDet: {
            auto trace = srnet.forward(g, lr);
            auto ports = det.adapt_features(g, trace.f_lr_out, trace.f_hr_out);
            det.detect<float>(g, trace.sr_image->value, std::optional(ports));
            return;
        }
        }
    };
}

/// One record per line: image id, class id, score, then the corner
/// coordinates with 4 decimal places.
inline void write_detections_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::vector<Detection>>>& per_image) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write detections: " + path.string());
    char line[256];
    for (const auto& [id, dets] : per_image)
        for (const Detection& d : dets) {
            std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.4f,%.4f,%.4f,%.4f\n", id.c_str(),
                          d.class_id, d.score, d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax);
            out << line;
        }
}

} // namespace srdet
