#pragma once

#include <vector>

#include "canids/nn/param.hpp"

namespace canids::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction; one first/second moment slot per parameter.
class Adam {
public:
    Adam(const ParamSet& params, AdamOptions options = {});

    void step(ParamSet& params, const GradBuffer& grads);
    std::size_t steps() const { return step_; }
    const AdamOptions& options() const { return options_; }

private:
    AdamOptions options_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::size_t step_ = 0;
};

}  // namespace canids::nn
