#include "canids/nn/tape.hpp"

#include "canids/error.hpp"

namespace canids::nn {

Var Tape::constant(Matrix value) { return leaf(std::move(value), false); }

Var Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const Param& param, Matrix* sink) {
    if (sink && !sink->same_shape(param.value))
        throw DimensionError("gradient sink for '" + param.name + "' has shape " + sink->shape_string() +
                             ", parameter has " + param.value.shape_string());
    Node n;
    n.external = &param.value;
    n.sink = sink;
    n.requires_grad = sink != nullptr;
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<Var> Tape::bind(const ParamSet& params, GradBuffer* grads) {
    if (grads && grads->size() != params.size()) throw DimensionError("gradient buffer does not match parameters");
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(param(params[i], grads ? &(*grads)[i] : nullptr));
    return vars;
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(std::uint32_t id) const {
    const auto& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

const Matrix& Tape::grad(std::uint32_t id) const {
    const auto& n = nodes_[id];
    return n.sink ? *n.sink : n.grad;
}

Matrix& Tape::grad_ref(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.sink) return *n.sink;
    if (n.grad.empty()) {
        const auto& v = value(id);
        n.grad = Matrix(v.rows(), v.cols());
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw StateError("backward on a variable from another tape");
    if (value(loss.id()).size() != 1) throw DimensionError("backward needs a scalar loss, got " + value(loss.id()).shape_string());
    if (!nodes_[loss.id()].requires_grad) return;
    grad_ref(loss.id())[0] += 1.0;
    for (std::int64_t id = loss.id(); id >= 0; --id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
        n.backward(*this, static_cast<std::uint32_t>(id));
    }
}

}  // namespace canids::nn
