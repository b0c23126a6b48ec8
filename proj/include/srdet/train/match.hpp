#pragma once

#include <array>
#include <vector>

#include "srdet/det/box.hpp"
#include "srdet/det/priors.hpp"

namespace srdet {

/// Per-prior assignment produced by match_priors. Labels use 0 for
/// background and class_id+1 for positives.
struct MatchResult {
    std::vector<int> labels;
    std::vector<std::array<double, 4>> loc_targets;
    std::vector<char> positive;
    int num_positives = 0;
    bool no_ground_truth = false;
};

/// SSD target assignment:
///  1. greedy bipartite forcing: repeatedly take the globally best
///     (gt, prior) IoU pair among unmatched ground truths and unassigned
///     priors (ties to the lower index), so every ground truth owns at
///     least one positive prior;
///  2. every remaining prior whose best-IoU ground truth reaches the
///     threshold also becomes positive;
///  3. positives get variance-encoded regression targets.
inline MatchResult match_priors(const std::vector<Box>& gt_boxes,
                                const std::vector<int>& gt_classes,
                                const std::vector<PriorBox>& priors, double img_w, double img_h,
                                double iou_threshold = 0.5, double var_center = 0.1,
                                double var_size = 0.2) {
    const int n = static_cast<int>(priors.size());
    const int g = static_cast<int>(gt_boxes.size());
    if (gt_boxes.size() != gt_classes.size())
        throw ValidationError("match_priors: box/class count mismatch");

    MatchResult out;
    out.labels.assign(n, 0);
    out.loc_targets.assign(n, {0, 0, 0, 0});
    out.positive.assign(n, 0);
    if (g == 0) {
        out.no_ground_truth = true;
        return out;
    }

    std::vector<Box> prior_boxes(n);
    for (int p = 0; p < n; ++p) prior_boxes[p] = prior_to_box(priors[p], img_w, img_h);

    std::vector<double> overlap(static_cast<std::size_t>(g) * n);
    for (int i = 0; i < g; ++i)
        for (int p = 0; p < n; ++p)
            overlap[static_cast<std::size_t>(i) * n + p] = iou(gt_boxes[i], prior_boxes[p]);

    std::vector<int> assigned_gt(n, -1);
    std::vector<char> gt_matched(g, 0);

    const int rounds = std::min(g, n);
    for (int r = 0; r < rounds; ++r) {
        double best = -1.0;
        int best_g = -1, best_p = -1;
        for (int i = 0; i < g; ++i) {
            if (gt_matched[i]) continue;
            for (int p = 0; p < n; ++p) {
                if (assigned_gt[p] >= 0) continue;
                if (overlap[static_cast<std::size_t>(i) * n + p] > best) {
                    best = overlap[static_cast<std::size_t>(i) * n + p];
                    best_g = i;
                    best_p = p;
                }
            }
        }
        if (best_g < 0) break;
        gt_matched[best_g] = 1;
        assigned_gt[best_p] = best_g;
    }

    for (int p = 0; p < n; ++p) {
        if (assigned_gt[p] < 0) {
            int best_g = -1;
            double best = 0.0;
            for (int i = 0; i < g; ++i)
                if (overlap[static_cast<std::size_t>(i) * n + p] > best) {
                    best = overlap[static_cast<std::size_t>(i) * n + p];
                    best_g = i;
                }
            if (best_g >= 0 && best >= iou_threshold) assigned_gt[p] = best_g;
        }
        if (assigned_gt[p] >= 0) {
            const int i = assigned_gt[p];
            out.labels[p] = gt_classes[i] + 1;
            out.positive[p] = 1;
            out.loc_targets[p] =
                encode_box(gt_boxes[i], priors[p], var_center, var_size, img_w, img_h);
            ++out.num_positives;
        }
    }
    return out;
}

} // namespace srdet
