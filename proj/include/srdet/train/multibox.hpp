#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "srdet/core/graph.hpp"
#include "srdet/train/match.hpp"

namespace srdet {

template <typename T>
struct MultiboxLossOut {
    Value<T> total;
    double loc_term = 0.0;
    double conf_term = 0.0;
    int num_positives = 0;
    int num_negatives = 0;
    /// True when the image had no positives: the loss degrades to a
    /// classification-only term over the top background priors.
    bool conf_only = false;
};

/// Smooth-L1 on positive offsets plus softmax cross-entropy with
/// hard-negative mining at neg_ratio negatives per positive, both
/// normalized by the positive count. loc rows are (1,N,4), conf rows
/// (1,N,num_classes+1) with column 0 = background.
template <typename T>
MultiboxLossOut<T> multibox_loss(const Value<T>& loc, const Value<T>& conf,
                                 const MatchResult& match, double neg_ratio = 3.0) {
    const int n = loc->value.height();
    const int columns = conf->value.width();
    if (conf->value.height() != n || static_cast<int>(match.labels.size()) != n)
        throw ShapeError("multibox: prior count mismatch (loc " + std::to_string(n) + ", conf " +
                         std::to_string(conf->value.height()) + ", match " +
                         std::to_string(match.labels.size()) + ")");
    if (loc->value.width() != 4) throw ShapeError("multibox: loc rows must have 4 columns");

    const int num_pos = match.num_positives;

    // Per-row softmax and cross-entropy against the assigned label.
    auto softmax_rows = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * columns);
    std::vector<double> ce(n);
    for (int i = 0; i < n; ++i) {
        const T* row = conf->value.row(0, i);
        double mx = static_cast<double>(row[0]);
        for (int c = 1; c < columns; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double denom = 0.0;
        for (int c = 0; c < columns; ++c) {
            const double e = std::exp(static_cast<double>(row[c]) - mx);
            (*softmax_rows)[static_cast<std::size_t>(i) * columns + c] = e;
            denom += e;
        }
        for (int c = 0; c < columns; ++c)
            (*softmax_rows)[static_cast<std::size_t>(i) * columns + c] /= denom;
        ce[i] = -std::log(
            std::max((*softmax_rows)[static_cast<std::size_t>(i) * columns + match.labels[i]],
                     1e-30));
    }

    // Hard-negative mining: keep the highest-loss background priors, ties
    // broken by index for determinism.
    std::vector<int> negatives;
    for (int i = 0; i < n; ++i)
        if (!match.positive[i]) negatives.push_back(i);
    std::stable_sort(negatives.begin(), negatives.end(),
                     [&](int a, int b) { return ce[a] > ce[b]; });
    const int keep_neg =
        num_pos > 0
            ? std::min<int>(static_cast<int>(neg_ratio * num_pos), static_cast<int>(negatives.size()))
            : std::min<int>(static_cast<int>(neg_ratio), static_cast<int>(negatives.size()));
    negatives.resize(keep_neg);

    const double norm = num_pos > 0 ? num_pos : std::max(keep_neg, 1);

    // Localization term on positives.
    double loc_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!match.positive[i]) continue;
        const T* row = loc->value.row(0, i);
        for (int j = 0; j < 4; ++j) {
            const double d = static_cast<double>(row[j]) - match.loc_targets[i][j];
            loc_sum += std::fabs(d) < 1.0 ? 0.5 * d * d : std::fabs(d) - 0.5;
        }
    }

    double conf_sum = 0.0;
    auto selected = std::make_shared<std::vector<int>>();
    for (int i = 0; i < n; ++i)
        if (match.positive[i]) selected->push_back(i);
    for (int i : negatives) selected->push_back(i);
    for (int i : *selected) conf_sum += ce[i];

    MultiboxLossOut<T> out;
    out.loc_term = loc_sum / norm;
    out.conf_term = conf_sum / norm;
    out.num_positives = num_pos;
    out.num_negatives = keep_neg;
    out.conf_only = num_pos == 0;

    Tensor<T> total(1, 1, 1);
    total[0] = static_cast<T>(out.loc_term + out.conf_term);
    auto node = make_node(std::move(total));
    node->parents = {loc, conf};
    node->requires_grad = loc->requires_grad || conf->requires_grad;
    if (node->requires_grad) {
        auto targets = std::make_shared<std::vector<std::array<double, 4>>>(match.loc_targets);
        auto positive = std::make_shared<std::vector<char>>(match.positive);
        auto labels = std::make_shared<std::vector<int>>(match.labels);
        node->backprop = [softmax_rows, selected, targets, positive, labels, norm,
                          columns](Node<T>& self) {
            const T upstream = self.grad[0];
            auto& loc_ = *self.parents[0];
            auto& conf_ = *self.parents[1];
            if (loc_.requires_grad) {
                Tensor<T>& g = loc_.ensure_grad();
                for (std::size_t i = 0; i < positive->size(); ++i) {
                    if (!(*positive)[i]) continue;
                    const T* row = loc_.value.row(0, static_cast<int>(i));
                    T* grow = g.row(0, static_cast<int>(i));
                    for (int j = 0; j < 4; ++j) {
                        const double d = static_cast<double>(row[j]) - (*targets)[i][j];
                        const double dd = std::fabs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0);
                        grow[j] += upstream * static_cast<T>(dd / norm);
                    }
                }
            }
            if (conf_.requires_grad) {
                Tensor<T>& g = conf_.ensure_grad();
                for (int i : *selected) {
                    T* grow = g.row(0, i);
                    const double* probs = softmax_rows->data() + static_cast<std::size_t>(i) * columns;
                    for (int c = 0; c < columns; ++c) {
                        const double onehot = c == (*labels)[i] ? 1.0 : 0.0;
                        grow[c] += upstream * static_cast<T>((probs[c] - onehot) / norm);
                    }
                }
            }
        };
    }
    out.total = node;
    return out;
}

} // namespace srdet
