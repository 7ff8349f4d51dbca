// SPDX-License-Identifier: Apache-2.0
#include "fvm/diff/array.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fvm::diff {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("array shape must have at least one extent");
    for (auto extent : shape) {
        if (extent == 0) throw std::invalid_argument("array extents must be positive, got " + to_string(shape));
    }
}

}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(numel(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (numel(shape_) != data_.size()) {
        throw std::invalid_argument("array of shape " + to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                                    " values, got " + std::to_string(data_.size()));
    }
}

Array Array::scalar(double value) { return Array({1}, std::vector<double>{value}); }

Array Array::vector(std::vector<double> values) {
    const auto n = values.size();
    return Array({n}, std::move(values));
}

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw std::invalid_argument("from_rows needs at least one row");
    const auto cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw std::invalid_argument("from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Array({rows.size(), cols}, std::move(data));
}

std::size_t Array::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
    }
    return shape_[axis];
}

double Array::item() const {
    if (data_.size() != 1) throw std::logic_error("item() on non-scalar array of shape " + to_string(shape_));
    return data_[0];
}

bool Array::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Array Array::reshaped(Shape shape) const { return Array(std::move(shape), data_); }

std::vector<double> row(const Array& matrix, std::size_t r) {
    const auto cols = matrix.dim(1);
    auto begin = matrix.data().begin() + static_cast<std::ptrdiff_t>(r * cols);
    return {begin, begin + static_cast<std::ptrdiff_t>(cols)};
}

}  // namespace fvm::diff
