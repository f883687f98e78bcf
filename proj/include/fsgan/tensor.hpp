#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fsgan {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Batch is always the leading dimension.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    /// Number of elements per leading-dimension row.
    std::size_t row_size() const;

    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;

    /// Copy of rows [begin, end) along the leading dimension.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    Tensor gather_rows(std::span<const std::size_t> rows) const;

    bool operator==(const Tensor&) const = default;
};

Tensor stack_rows(std::span<const Tensor> rows);

} // namespace fsgan
