#pragma once

#include <cstddef>
#include <span>

namespace canids {

// Binary detection metrics with attack = positive class.
struct Metrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    std::size_t total() const { return tp + fp + tn + fn; }
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth);

// Area under the ROC curve via the rank-sum statistic; ties count one half.
double roc_auc(std::span<const double> scores, std::span<const int> truth);

}  // namespace canids
