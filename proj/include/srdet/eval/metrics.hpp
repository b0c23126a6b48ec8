#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "srdet/data/sample.hpp"
#include "srdet/det/box.hpp"

namespace srdet {

inline constexpr double kPsnrCap = 99.0;

/// 10*log10(peak^2 / MSE) in dB; reported as the cap for near-identical
/// images (MSE below 1e-12).
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (a.shape() != b.shape())
        throw ShapeError("psnr shapes differ: " + a.shape().str() + " vs " + b.shape().str());
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= a.size();
    if (mse < 1e-12) return kPsnrCap;
    return 10.0 * std::log10(peak * peak / mse);
}

/// One scored detection attributed to an image; input to AP computation.
struct ScoredDetection {
    int image_index = 0;
    double score = 0.0;
    Box box;
};

/// Average precision for one class under greedy score-descending matching
/// (each ground truth usable once, IoU >= threshold required). Default is
/// the all-points interpolation; eleven_point selects the older 11-point
/// protocol.
inline double average_precision(std::vector<ScoredDetection> detections,
                                const std::vector<std::vector<Box>>& gts_per_image,
                                double iou_threshold = 0.5, bool eleven_point = false) {
    std::size_t num_gts = 0;
    for (const auto& gts : gts_per_image) num_gts += gts.size();
    if (num_gts == 0) throw ValidationError("average_precision: no ground truths for the class");
    if (detections.empty()) return 0.0;

    std::stable_sort(detections.begin(), detections.end(),
                     [](const ScoredDetection& a, const ScoredDetection& b) {
                         return a.score > b.score;
                     });

    std::vector<std::vector<char>> used(gts_per_image.size());
    for (std::size_t i = 0; i < gts_per_image.size(); ++i)
        used[i].assign(gts_per_image[i].size(), 0);

    const std::size_t n = detections.size();
    std::vector<double> precision(n), recall(n);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const ScoredDetection& d = detections[i];
        const auto& gts = gts_per_image.at(d.image_index);
        int best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            const double v = iou(d.box, gts[j]);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(j);
            }
        }
        if (best_gt >= 0 && best_iou >= iou_threshold && !used[d.image_index][best_gt]) {
            used[d.image_index][best_gt] = 1;
            ++tp;
        } else {
            ++fp;
        }
        precision[i] = static_cast<double>(tp) / (tp + fp);
        recall[i] = static_cast<double>(tp) / num_gts;
    }

    if (eleven_point) {
        double ap = 0.0;
        for (int r = 0; r <= 10; ++r) {
            const double level = r / 10.0;
            double best = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (recall[i] >= level) best = std::max(best, precision[i]);
            ap += best / 11.0;
        }
        return ap;
    }

    // All-points interpolation: integrate the precision envelope.
    std::vector<double> envelope = precision;
    for (int i = static_cast<int>(n) - 2; i >= 0; --i)
        envelope[i] = std::max(envelope[i], envelope[i + 1]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ap += (recall[i] - prev_recall) * envelope[i];
        prev_recall = recall[i];
    }
    return ap;
}

struct EvalResult {
    std::map<int, double> per_class_ap;
    std::vector<int> absent_classes; // classes with zero ground truths
    double map = 0.0;
    long total_detections = 0;
    long matched_ground_truths = 0;
    long total_ground_truths = 0;
};

/// Runs a detector over every sample, aggregates per-class AP, and reports
/// mAP (mean over classes that have ground truth). `detect_fn` receives a
/// sample and returns detections in HR pixel coordinates.
inline EvalResult evaluate_map(const std::function<std::vector<Detection>(const Sample&)>& detect_fn,
                               const Dataset& dataset, double iou_threshold = 0.5,
                               bool eleven_point = false) {
    if (dataset.empty()) throw ValidationError("evaluate_map: empty dataset");
    const int num_classes = static_cast<int>(dataset.class_names.size());

    std::map<int, std::vector<ScoredDetection>> dets_by_class;
    std::map<int, std::vector<std::vector<Box>>> gts_by_class;
    for (int c = 0; c < num_classes; ++c)
        gts_by_class[c].assign(dataset.size(), {});

    EvalResult result;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Sample& sample = dataset.samples[i];
        for (std::size_t j = 0; j < sample.boxes.size(); ++j) {
            gts_by_class[sample.class_ids[j]][i].push_back(sample.boxes[j]);
            ++result.total_ground_truths;
        }
        for (const Detection& d : detect_fn(sample)) {
            if (d.class_id < 0 || d.class_id >= num_classes)
                throw ValidationError("detection class outside configured class set");
            dets_by_class[d.class_id].push_back(
                ScoredDetection{static_cast<int>(i), d.score, d.box});
            ++result.total_detections;
        }
    }

    double ap_sum = 0.0;
    int ap_count = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::size_t gt_count = 0;
        for (const auto& gts : gts_by_class[c]) gt_count += gts.size();
        if (gt_count == 0) {
            result.absent_classes.push_back(c);
            continue;
        }
        const double ap =
            average_precision(dets_by_class[c], gts_by_class[c], iou_threshold, eleven_point);
        result.per_class_ap[c] = ap;
        ap_sum += ap;
        ++ap_count;
    }
    result.map = ap_count > 0 ? ap_sum / ap_count : 0.0;

    // Matched-GT tally at the same threshold, for the report.
    for (int c = 0; c < num_classes; ++c) {
        auto dets = dets_by_class[c];
        std::stable_sort(dets.begin(), dets.end(),
                         [](const ScoredDetection& a, const ScoredDetection& b) {
                             return a.score > b.score;
                         });
        std::vector<std::vector<char>> used(dataset.size());
        for (std::size_t i = 0; i < dataset.size(); ++i)
            used[i].assign(gts_by_class[c][i].size(), 0);
        for (const auto& d : dets) {
            const auto& gts = gts_by_class[c][d.image_index];
            int best = -1;
            double best_iou = 0.0;
            for (std::size_t j = 0; j < gts.size(); ++j) {
                const double v = iou(d.box, gts[j]);
                if (v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(j);
                }
            }
            if (best >= 0 && best_iou >= iou_threshold && !used[d.image_index][best]) {
                used[d.image_index][best] = 1;
                ++result.matched_ground_truths;
            }
        }
    }
    return result;
}

} // namespace srdet
