#include "canids/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "canids/error.hpp"

namespace canids {

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    Metrics m{tp, fp, tn, fn};
    const double total = static_cast<double>(m.total());
    m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const std::size_t f1_den = 2 * tp + fp + fn;
    m.f1 = tp > 0 ? static_cast<double>(2 * tp) / static_cast<double>(f1_den) : 0.0;
    return m;
}

Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw DimensionError("compute_metrics: prediction/truth length mismatch");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] != 0, t = truth[i] != 0;
        tp += p && t;
        fp += p && !t;
        tn += !p && !t;
        fn += !p && t;
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

double roc_auc(std::span<const double> scores, std::span<const int> truth) {
    if (scores.size() != truth.size()) throw DimensionError("roc_auc: score/truth length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (truth[order[k]]) {
                positive_rank_sum += avg_rank;
                ++positives;
            }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) throw DataError("roc_auc needs both classes");
    const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
    return (positive_rank_sum - p * (p + 1) / 2.0) / (p * n);
}

}  // namespace canids
