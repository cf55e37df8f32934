#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "canids/nn/matrix.hpp"
#include "canids/nn/param.hpp"

namespace canids::nn {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while its tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::uint32_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Matrix& value() const;
    const Matrix& grad() const;  // empty until backward reaches this node
    bool requires_grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double item() const { return value().item(); }

private:
    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order, so backward simply walks the tape from the loss back to the start.
// A tape belongs to one thread; parameter values are referenced, not copied, so the
// bound ParamSet must outlive the tape and must not change while it is in use.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var leaf(Matrix value, bool requires_grad = true);

    // Parameter leaf reading `param.value` in place. When `sink` is non-null the
    // parameter's gradient is accumulated into it during backward.
    Var param(const Param& param, Matrix* sink);

    // Binds every parameter of `params`, in order. A null `grads` binds them as constants.
    std::vector<Var> bind(const ParamSet& params, GradBuffer* grads);

    // Records an op result. `backward` runs only if some input requires gradients.
    Var record(Matrix value, bool requires_grad, BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1 and propagates to every node that requires gradients.
    void backward(Var loss);

    const Matrix& value(std::uint32_t id) const;
    const Matrix& grad(std::uint32_t id) const;
    bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

    // Gradient accumulator for a node, allocated (zeroed) on first use.
    Matrix& grad_ref(std::uint32_t id);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        Matrix* sink = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace canids::nn
