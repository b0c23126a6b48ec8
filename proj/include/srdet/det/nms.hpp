#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "srdet/det/box.hpp"

namespace srdet {

/// Class-wise greedy suppression with a top-k prefilter. Per class:
/// candidates are sorted by score descending (ties broken by input order),
/// truncated to top_k, and kept only if their IoU with every previously
/// kept box is <= threshold. Output is score-sorted across classes.
inline std::vector<Detection> fast_nms(const std::vector<Detection>& detections,
                                       double iou_threshold, int top_k = 200) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
        throw ValidationError("nms iou threshold must be in (0,1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const Detection& d = detections[i];
        if (!(d.score >= 0.0 && d.score <= 1.0))
            throw ValidationError("detection score outside [0,1]");
        by_class[d.class_id].push_back(i);
    }

    std::vector<Detection> kept;
    for (auto& [cls, idx] : by_class) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return detections[a].score > detections[b].score;
        });
        if (top_k > 0 && static_cast<int>(idx.size()) > top_k) idx.resize(top_k);
        std::vector<std::size_t> cls_kept;
        for (std::size_t i : idx) {
            bool suppressed = false;
            for (std::size_t j : cls_kept)
                if (iou(detections[i].box, detections[j].box) > iou_threshold) {
                    suppressed = true;
                    break;
                }
            if (!suppressed) cls_kept.push_back(i);
        }
        for (std::size_t i : cls_kept) kept.push_back(detections[i]);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return kept;
}

} // namespace srdet
