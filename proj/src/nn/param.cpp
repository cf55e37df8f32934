#include "canids/nn/param.hpp"

#include <cstring>

#include "canids/error.hpp"
#include "canids/nn/kernels.hpp"

namespace canids::nn {

std::size_t ParamSet::add(std::string name, Matrix value) {
    if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back({std::move(name), std::move(value)});
    return params_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    return std::nullopt;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params_) {
        mix(p.name.data(), p.name.size());
        const std::uint64_t dims[2] = {p.value.rows(), p.value.cols()};
        mix(dims, sizeof dims);
        mix(p.value.data(), p.value.size() * sizeof(double));
    }
    return h;
}

GradBuffer::GradBuffer(const ParamSet& params) {
    grads_.reserve(params.size());
    for (const auto& p : params) grads_.emplace_back(p.value.rows(), p.value.cols());
}

void GradBuffer::zero() {
    for (auto& g : grads_) g.fill(0.0);
}

void GradBuffer::scale(double factor) {
    for (auto& g : grads_)
        for (auto& v : g.values()) v *= factor;
}

GradBuffer& GradBuffer::operator+=(const GradBuffer& other) {
    if (other.grads_.size() != grads_.size()) throw DimensionError("GradBuffer += with different parameter counts");
    for (std::size_t i = 0; i < grads_.size(); ++i) kernels::axpy(1.0, other.grads_[i], grads_[i]);
    return *this;
}

}  // namespace canids::nn
