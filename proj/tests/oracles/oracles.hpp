#pragma once

// Independent reference implementations used as test oracles. They favour obviously
// correct loops over speed and share no code with the library beyond plain data types.

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "canids/can_frame.hpp"
#include "canids/nn/matrix.hpp"

namespace canids::oracle {

struct BruteNode {
    std::uint16_t can_id = 0;
    double normalized_id = 0.0;
    double frequency = 0.0;
    double mean_payload = 0.0;
};

struct BruteGraph {
    std::vector<BruteNode> nodes;  // sorted by CAN ID
    std::map<std::pair<std::uint16_t, std::uint16_t>, std::size_t> edges;  // (src id, dst id) -> multiplicity
    std::size_t total_weight = 0;
    int label = 0;
};

// Window graph over frames[start, start + window) by direct enumeration.
BruteGraph brute_window(std::span<const CanFrame> frames, std::size_t start, std::size_t window, bool directed);

struct BruteMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Confusion table by tallying (prediction, truth) pairs; F1 = 2TP / (2TP + FP + FN).
BruteMetrics brute_metrics(std::span<const int> predicted, std::span<const int> truth);

// Fraction of (attack, benign) pairs ordered correctly, ties counting one half.
double brute_auc(std::span<const double> scores, std::span<const int> truth);

struct DenseGatOutput {
    nn::Matrix out;        // n x out_width
    nn::Matrix attention;  // m x heads
};

// Attention layer evaluated edge by edge with scalar arithmetic.
DenseGatOutput dense_gat_layer(const nn::Matrix& x, std::span<const std::uint32_t> src,
                               std::span<const std::uint32_t> dst, const nn::Matrix& log_weight,
                               const nn::Matrix& weight, const nn::Matrix& att_src, const nn::Matrix& att_dst,
                               const nn::Matrix& bias, std::size_t heads, bool concat, double slope);

// KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2)) for one scalar pair, from log standard deviations.
double gaussian_kl(double mu_p, double log_sigma_p, double mu_q, double log_sigma_q);

// alpha * CE + (1 - alpha) * tau^2 * KL(softmax(s / tau) || softmax(t / tau)) for one row.
double kd_row_loss(std::span<const double> student, std::span<const double> teacher, std::size_t label, double tau,
                   double alpha, bool tau_squared);

}  // namespace canids::oracle
