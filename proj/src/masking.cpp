#include "fsgan/masking.hpp"

#include "fsgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>

namespace fsgan {

std::vector<double> MaskSpec::keep_indicator() const
{
    std::vector<double> keep(length, 1.0);
    for (auto i : masked_indices) keep[i] = 0.0;
    return keep;
}

std::size_t masked_count(std::size_t length, double ratio)
{
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("mask ratio must lie in [0, 1], got " + std::to_string(ratio));
    // Guard against ratio*length landing a hair below an integer, e.g. 0.7*10.
    const double exact = ratio * static_cast<double>(length);
    const auto count = static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
    return std::min(count, length);
}

MaskSpec sample_mask_from_seed(std::size_t length, double ratio, std::uint64_t seed)
{
    if (length == 0) throw DomainError("mask length must be positive");
    MaskSpec spec;
    spec.length = length;
    spec.ratio = ratio;
    spec.seed = seed;
    const auto count = masked_count(length, ratio);
    spec.masked_indices.reserve(count);
    Rng local(seed);
    std::vector<std::size_t> all(length);
    std::iota(all.begin(), all.end(), std::size_t{0});
    // Selection sampling: uniform over subsets, output stays sorted.
    std::sample(all.begin(), all.end(), std::back_inserter(spec.masked_indices), static_cast<std::ptrdiff_t>(count),
                local);
    return spec;
}

MaskSpec sample_mask(std::size_t length, double ratio, Rng& rng)
{
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("mask ratio must lie in [0, 1], got " + std::to_string(ratio));
    return sample_mask_from_seed(length, ratio, rng());
}

Tensor apply_mask(const Tensor& features, const MaskSpec& mask)
{
    const auto per_row = features.rank() <= 1 ? features.size() : features.row_size();
    if (per_row != mask.length)
        throw ShapeError("apply_mask: feature length " + std::to_string(per_row) + " != mask length " +
                         std::to_string(mask.length));
    Tensor out = features;
    const auto rows = out.size() / mask.length;
    for (std::size_t r = 0; r < rows; ++r)
        for (auto i : mask.masked_indices) out.data[r * mask.length + i] = 0.0;
    return out;
}

Var apply_masks(const Var& batch, std::span<const MaskSpec> masks)
{
    const auto& v = batch.value();
    if (v.rank() < 2) throw ShapeError("apply_masks expects a batch, got " + shape_string(v.shape));
    const auto rows = v.dim(0);
    const auto len = v.row_size();
    if (masks.size() != 1 && masks.size() != rows)
        throw ShapeError("apply_masks: " + std::to_string(masks.size()) + " masks for " + std::to_string(rows) + " rows");
    Tensor keep(v.shape, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& m = masks[masks.size() == 1 ? 0 : r];
        if (m.length != len)
            throw ShapeError("apply_masks: mask length " + std::to_string(m.length) + " != feature length " +
                             std::to_string(len));
        for (auto i : m.masked_indices) keep.data[r * len + i] = 0.0;
    }
    return ops::mul_const(batch, keep);
}

std::vector<MaskSpec> sample_batch_masks(std::size_t batch, std::size_t length, const MaskConfig& cfg, Rng& rng)
{
    std::vector<MaskSpec> masks;
    const std::size_t n = cfg.per_sample ? batch : 1;
    masks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) masks.push_back(sample_mask(length, cfg.ratio, rng));
    return masks;
}

} // namespace fsgan
