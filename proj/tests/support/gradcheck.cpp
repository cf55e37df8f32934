#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace canids::testing {

namespace {

double rel_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradCheckFloor});
}

void track(GradCheckResult& res, double analytic, double numeric, const std::string& where) {
    const double e = rel_error(analytic, numeric);
    ++res.checked;
    if (!res.worst.empty() && e <= res.max_rel_error) return;
    res.max_rel_error = e;
    std::ostringstream os;
    os.precision(10);
    os << where << " analytic=" << analytic << " numeric=" << numeric;
    res.worst = os.str();
}

}  // namespace

GradCheckResult gradcheck(const std::vector<nn::Matrix>& inputs, const LossBuilder& loss, double step) {
    std::vector<nn::Matrix> work = inputs;
    auto eval = [&](bool backward, std::vector<nn::Matrix>* grads) {
        nn::Tape tape;
        std::vector<nn::Var> leaves;
        for (const auto& m : work) leaves.push_back(tape.leaf(m, true));
        nn::Var l = loss(tape, leaves);
        if (backward) {
            tape.backward(l);
            for (std::size_t i = 0; i < leaves.size(); ++i) {
                const auto& g = leaves[i].grad();
                (*grads)[i] = g.empty() ? nn::Matrix(work[i].rows(), work[i].cols()) : g;
            }
        }
        return l.item();
    };
    std::vector<nn::Matrix> analytic(work.size());
    eval(true, &analytic);
    GradCheckResult res;
    for (std::size_t i = 0; i < work.size(); ++i) {
        for (std::size_t k = 0; k < work[i].size(); ++k) {
            const double orig = work[i][k];
            work[i][k] = orig + step;
            const double up = eval(false, nullptr);
            work[i][k] = orig - step;
            const double down = eval(false, nullptr);
            work[i][k] = orig;
            track(res, analytic[i][k], (up - down) / (2 * step),
                  "input[" + std::to_string(i) + "][" + std::to_string(k) + "]");
        }
    }
    return res;
}

GradCheckResult gradcheck_params(nn::ParamSet& params, const ParamLossBuilder& loss, double step) {
    nn::GradBuffer grads(params);
    {
        nn::Tape tape;
        auto bound = tape.bind(params, &grads);
        tape.backward(loss(tape, bound));
    }
    auto eval = [&] {
        nn::Tape tape;
        auto bound = tape.bind(params, nullptr);
        return loss(tape, bound).item();
    };
    GradCheckResult res;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i].value;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double orig = value[k];
            value[k] = orig + step;
            const double up = eval();
            value[k] = orig - step;
            const double down = eval();
            value[k] = orig;
            track(res, grads[i][k], (up - down) / (2 * step), params[i].name + "[" + std::to_string(k) + "]");
        }
    }
    return res;
}

nn::Matrix random_matrix(std::size_t rows, std::size_t cols, nn::Rng& rng, double lo, double hi) {
    nn::Matrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

}  // namespace canids::testing
