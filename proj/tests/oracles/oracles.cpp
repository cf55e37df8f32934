#include "oracles/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace canids::oracle {

BruteGraph brute_window(std::span<const CanFrame> frames, std::size_t start, std::size_t window, bool directed) {
    BruteGraph g;
    std::map<std::uint16_t, std::vector<const CanFrame*>> by_id;
    for (std::size_t i = start; i < start + window; ++i) {
        by_id[frames[i].can_id].push_back(&frames[i]);
        if (frames[i].label == Label::Attack) g.label = 1;
    }
    for (const auto& [id, list] : by_id) {
        BruteNode node;
        node.can_id = id;
        node.normalized_id = id / 2047.0;
        node.frequency = static_cast<double>(list.size()) / static_cast<double>(window);
        double sum = 0.0;
        std::size_t bytes = 0;
        for (const auto* f : list)
            for (std::size_t b = 0; b < f->dlc; ++b) {
                sum += f->payload[b];
                ++bytes;
            }
        node.mean_payload = bytes ? sum / static_cast<double>(bytes) / 255.0 : 0.0;
        g.nodes.push_back(node);
    }
    for (std::size_t i = start; i + 1 < start + window; ++i) {
        std::uint16_t a = frames[i].can_id, b = frames[i + 1].can_id;
        if (!directed && a > b) std::swap(a, b);
        ++g.edges[{a, b}];
        ++g.total_weight;
    }
    return g;
}

BruteMetrics brute_metrics(std::span<const int> predicted, std::span<const int> truth) {
    std::size_t table[2][2] = {{0, 0}, {0, 0}};  // [prediction][truth]
    for (std::size_t i = 0; i < predicted.size(); ++i) ++table[predicted[i] ? 1 : 0][truth[i] ? 1 : 0];
    BruteMetrics m;
    m.tp = table[1][1];
    m.fp = table[1][0];
    m.tn = table[0][0];
    m.fn = table[0][1];
    const std::size_t total = predicted.size();
    auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    m.accuracy = ratio(m.tp + m.tn, total);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
    return m;
}

double brute_auc(std::span<const double> scores, std::span<const int> truth) {
    double good = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!truth[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (truth[j]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                good += 1.0;
            else if (scores[i] == scores[j])
                good += 0.5;
        }
    }
    return good / static_cast<double>(pairs);
}

DenseGatOutput dense_gat_layer(const nn::Matrix& x, std::span<const std::uint32_t> src,
                               std::span<const std::uint32_t> dst, const nn::Matrix& log_weight,
                               const nn::Matrix& weight, const nn::Matrix& att_src, const nn::Matrix& att_dst,
                               const nn::Matrix& bias, std::size_t heads, bool concat, double slope) {
    const std::size_t n = x.rows(), m = src.size();
    const std::size_t hf = weight.cols(), f = hf / heads;
    nn::Matrix wh(n, hf);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t c = 0; c < hf; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) s += x(v, k) * weight(k, c);
            wh(v, c) = s;
        }

    DenseGatOutput out{nn::Matrix(n, concat ? hf : f), nn::Matrix(m, heads)};
    nn::Matrix agg(n, hf);
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> logit(m);
        for (std::size_t e = 0; e < m; ++e) {
            double s = 0.0;
            for (std::size_t k = 0; k < f; ++k)
                s += att_dst(0, h * f + k) * wh(dst[e], h * f + k) + att_src(0, h * f + k) * wh(src[e], h * f + k);
            logit[e] = (s > 0 ? s : slope * s) + log_weight(e, 0);
        }
        for (std::size_t v = 0; v < n; ++v) {
            double peak = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < m; ++e)
                if (dst[e] == v) peak = std::max(peak, logit[e]);
            double z = 0.0;
            for (std::size_t e = 0; e < m; ++e)
                if (dst[e] == v) z += std::exp(logit[e] - peak);
            for (std::size_t e = 0; e < m; ++e) {
                if (dst[e] != v) continue;
                const double a = std::exp(logit[e] - peak) / z;
                out.attention(e, h) = a;
                for (std::size_t k = 0; k < f; ++k) agg(v, h * f + k) += a * wh(src[e], h * f + k);
            }
        }
    }
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t c = 0; c < out.out.cols(); ++c) {
            double s = 0.0;
            if (concat) {
                s = agg(v, c);
            } else {
                for (std::size_t h = 0; h < heads; ++h) s += agg(v, h * f + c);
                s /= static_cast<double>(heads);
            }
            s += bias(0, c);
            out.out(v, c) = s > 0 ? s : std::expm1(s);
        }
    return out;
}

double gaussian_kl(double mu_p, double log_sigma_p, double mu_q, double log_sigma_q) {
    const double var_p = std::exp(2 * log_sigma_p), var_q = std::exp(2 * log_sigma_q);
    return log_sigma_q - log_sigma_p + (var_p + (mu_p - mu_q) * (mu_p - mu_q)) / (2 * var_q) - 0.5;
}

namespace {

std::vector<double> softmax(std::span<const double> z, double tau) {
    std::vector<double> p(z.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : z) peak = std::max(peak, v / tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] / tau - peak);
    for (auto& v : p) v /= sum;
    return p;
}

}  // namespace

double kd_row_loss(std::span<const double> student, std::span<const double> teacher, std::size_t label, double tau,
                   double alpha, bool tau_squared) {
    const auto hard = softmax(student, 1.0);
    const double ce = -std::log(hard[label]);
    const auto ps = softmax(student, tau), pt = softmax(teacher, tau);
    double kl = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) kl += ps[i] * (std::log(ps[i]) - std::log(pt[i]));
    return alpha * ce + (1 - alpha) * (tau_squared ? tau * tau : 1.0) * kl;
}

}  // namespace canids::oracle
