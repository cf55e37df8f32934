#include "canids/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "canids/error.hpp"

namespace canids::nn {

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

Matrix ones_like(const Matrix& m) { return Matrix(m.rows(), m.cols(), 1.0); }

}  // namespace

Var bce(Var pred, const Matrix& target) {
    require_same(pred.value(), target, "bce");
    Tape& t = *pred.tape();
    Var p = clamp(pred, kProbEps, 1.0 - kProbEps);
    Var tgt = t.constant(target);
    Matrix inv_target = ones_like(target);
    for (std::size_t i = 0; i < target.size(); ++i) inv_target[i] -= target[i];
    Var one_minus_t = t.constant(std::move(inv_target));
    Var one_minus_p = add_scalar(scale(p, -1.0), 1.0);
    Var ll = add(mul(tgt, log(p)), mul(one_minus_t, log(one_minus_p)));
    return scale(mean(ll), -1.0);
}

Var bce_logits(Var logits, const Matrix& target) {
    require_same(logits.value(), target, "bce_logits");
    const Matrix& x = logits.value();
    const double n = static_cast<double>(x.size());
    if (x.size() == 0) throw DimensionError("bce_logits: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        total += std::max(x[i], 0.0) - target[i] * x[i] + std::log1p(std::exp(-std::abs(x[i])));
    const auto ia = logits.id();
    return logits.tape()->record(Matrix::scalar(total / n), logits.requires_grad(),
                                 [ia, target, n](Tape& t, std::uint32_t self) {
                                     const double g = t.grad(self).item() / n;
                                     const Matrix& x = t.value(ia);
                                     Matrix& ga = t.grad_ref(ia);
                                     for (std::size_t i = 0; i < x.size(); ++i) {
                                         const double p = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                                                    : std::exp(x[i]) / (1.0 + std::exp(x[i]));
                                         ga[i] += g * (p - target[i]);
                                     }
                                 });
}

Var cross_entropy(Var logits, const Index& classes) {
    if (classes.size() != logits.rows())
        throw DimensionError("cross_entropy: " + std::to_string(classes.size()) + " labels for logits " +
                             logits.value().shape_string());
    return scale(mean(pick(log_softmax(logits), classes)), -1.0);
}

Var mse(Var pred, const Matrix& target) {
    require_same(pred.value(), target, "mse");
    return mean(square(sub(pred, pred.tape()->constant(target))));
}

Var kl_gaussian_standard(Var mu, Var log_sigma) {
    require_same(mu.value(), log_sigma.value(), "kl_gaussian_standard");
    // 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma) / rows
    Var var = exp(scale(log_sigma, 2.0));
    Var terms = sub(add(square(mu), var), scale(log_sigma, 2.0));
    const double rows = static_cast<double>(mu.rows());
    return scale(add_scalar(sum(terms), -static_cast<double>(mu.value().size())), 0.5 / rows);
}

Var kl_gaussian(Var mu_p, Var log_sigma_p, Var mu_q, Var log_sigma_q) {
    require_same(mu_p.value(), log_sigma_p.value(), "kl_gaussian");
    require_same(mu_p.value(), mu_q.value(), "kl_gaussian");
    require_same(mu_q.value(), log_sigma_q.value(), "kl_gaussian");
    // log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
    Var var_p = exp(scale(log_sigma_p, 2.0));
    Var inv_var_q = exp(scale(log_sigma_q, -2.0));
    Var num = add(var_p, square(sub(mu_p, mu_q)));
    Var terms = add(sub(log_sigma_q, log_sigma_p), scale(mul(num, inv_var_q), 0.5));
    const auto rows = static_cast<double>(mu_p.rows());
    return scale(add_scalar(sum(terms), -0.5 * static_cast<double>(mu_p.value().size())), 1.0 / rows);
}

Var kl_categorical(Var p, Var q) {
    require_same(p.value(), q.value(), "kl_categorical");
    Var pc = clamp(p, kProbEps, 1.0);
    Var qc = clamp(q, kProbEps, 1.0);
    Var terms = mul(pc, sub(log(pc), log(qc)));
    return scale(sum(terms), 1.0 / static_cast<double>(p.rows()));
}

}  // namespace canids::nn
