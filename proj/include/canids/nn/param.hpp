#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canids/nn/matrix.hpp"

namespace canids::nn {

struct Param {
    std::string name;
    Matrix value;
};

// Named trainable tensors of one model, in registration order. Names are unique.
class ParamSet {
public:
    std::size_t add(std::string name, Matrix value);

    std::size_t size() const { return params_.size(); }
    bool empty() const { return params_.empty(); }
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::optional<std::size_t> find(std::string_view name) const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t scalar_count() const;

    // FNV-1a over names, shapes and raw value bytes.
    std::uint64_t checksum() const;

private:
    std::vector<Param> params_;
};

// Gradient accumulator with one matrix per parameter of a ParamSet.
class GradBuffer {
public:
    GradBuffer() = default;
    explicit GradBuffer(const ParamSet& params);

    std::size_t size() const { return grads_.size(); }
    Matrix& operator[](std::size_t i) { return grads_[i]; }
    const Matrix& operator[](std::size_t i) const { return grads_[i]; }

    void zero();
    void scale(double factor);
    GradBuffer& operator+=(const GradBuffer& other);

private:
    std::vector<Matrix> grads_;
};

}  // namespace canids::nn
