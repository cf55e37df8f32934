#include "canids/nn/matrix.hpp"

#include <algorithm>

#include "canids/error.hpp"

namespace canids::nn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols)
        throw DimensionError("Matrix: " + std::to_string(data_.size()) + " values for shape " + shape_string());
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Matrix::item() const {
    if (data_.size() != 1) throw DimensionError("item() on non-scalar " + shape_string());
    return data_[0];
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (!same_shape(o)) throw DimensionError("+=: shape mismatch " + shape_string() + " vs " + o.shape_string());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

}  // namespace canids::nn
