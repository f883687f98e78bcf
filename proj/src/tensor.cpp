#include "fsgan/tensor.hpp"

#include "fsgan/errors.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace fsgan {

std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values))
{
    if (data.size() != numel(shape))
        throw ShapeError("tensor data size " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
}

std::size_t Tensor::row_size() const
{
    if (shape.empty() || shape[0] == 0) return 0;
    return data.size() / shape[0];
}

std::span<double> Tensor::row(std::size_t i)
{
    const auto n = row_size();
    return {data.data() + i * n, n};
}

std::span<const double> Tensor::row(std::size_t i) const
{
    const auto n = row_size();
    return {data.data() + i * n, n};
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const
{
    if (begin > end || end > dim(0)) throw ShapeError("row slice out of range");
    Shape s = shape;
    s[0] = end - begin;
    const auto n = row_size();
    return Tensor(s, std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                         data.begin() + static_cast<std::ptrdiff_t>(end * n)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const
{
    Shape s = shape;
    s[0] = rows.size();
    Tensor out(s);
    const auto n = row_size();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= dim(0)) throw ShapeError("row index out of range");
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(rows[k] * n), n,
                    out.data.begin() + static_cast<std::ptrdiff_t>(k * n));
    }
    return out;
}

Tensor stack_rows(std::span<const Tensor> rows)
{
    if (rows.empty()) throw ShapeError("cannot stack an empty list of tensors");
    Shape s = rows.front().shape;
    s.insert(s.begin(), rows.size());
    Tensor out(s);
    const auto n = rows.front().size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].shape != rows.front().shape) throw ShapeError("stack_rows: inconsistent shapes");
        std::copy(rows[i].data.begin(), rows[i].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return out;
}

} // namespace fsgan
