// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fvm::diff {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float64 buffer with a fixed shape.
///
/// Every extent is positive and `size() == numel(shape())`. Scalars use shape {1}.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array scalar(double value);
    static Array vector(std::vector<double> values);
    static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;
    bool empty() const noexcept { return data_.empty(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // 2-D access; callers guarantee rank 2.
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    double item() const;
    bool all_finite() const noexcept;
    void fill(double value) noexcept;

    Array reshaped(Shape shape) const;

    friend bool operator==(const Array&, const Array&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Row `r` of a rank-2 array as a vector of its columns.
std::vector<double> row(const Array& matrix, std::size_t r);

}  // namespace fvm::diff
