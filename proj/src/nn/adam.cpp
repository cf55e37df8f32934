#include "canids/nn/adam.hpp"

#include <cmath>

#include "canids/error.hpp"

namespace canids::nn {

Adam::Adam(const ParamSet& params, AdamOptions options) : options_(options) {
    for (const auto& p : params) {
        m_.emplace_back(p.value.rows(), p.value.cols());
        v_.emplace_back(p.value.rows(), p.value.cols());
    }
}

void Adam::step(ParamSet& params, const GradBuffer& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw DimensionError("Adam::step: optimizer state, parameters and gradients disagree in count");
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& w = params[i].value;
        const Matrix& g = grads[i];
        if (!w.same_shape(g))
            throw DimensionError("Adam::step: gradient for '" + params[i].name + "' has shape " + g.shape_string());
        Matrix& m = m_[i];
        Matrix& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            w[k] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
        }
    }
}

}  // namespace canids::nn
