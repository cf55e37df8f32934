#pragma once

#include "canids/nn/ops.hpp"

namespace canids::nn {

// Probabilities are clamped into [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;

// Mean binary cross-entropy of probabilities `pred` against 0/1 targets.
Var bce(Var pred, const Matrix& target);

// bce(sigmoid(logits), target) evaluated as max(x, 0) - t x + log1p(exp(-|x|)), with no
// clamping and no cancellation for saturated logits.
Var bce_logits(Var logits, const Matrix& target);

// Mean over rows of -log softmax(logits)[row, class].
Var cross_entropy(Var logits, const Index& classes);

Var mse(Var pred, const Matrix& target);

// KL(N(mu, exp(log_sigma)^2) || N(0, I)) summed over columns, averaged over rows.
Var kl_gaussian_standard(Var mu, Var log_sigma);

// KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2)) summed over columns, averaged over rows.
Var kl_gaussian(Var mu_p, Var log_sigma_p, Var mu_q, Var log_sigma_q);

// KL(p || q) for row-wise categorical distributions, summed over columns and
// averaged over rows.
Var kl_categorical(Var p, Var q);

}  // namespace canids::nn
