#pragma once

#include "fsgan/autograd.hpp"
#include "fsgan/random.hpp"
#include "fsgan/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fsgan {

/// A random subset of positions of a flattened feature vector that are zeroed.
struct MaskSpec {
    std::size_t length = 0;
    double ratio = 0.0;
    /// Sorted, unique, each < length. Size is floor(ratio * length).
    std::vector<std::size_t> masked_indices;
    /// Seed the indices were drawn from; sample_mask_from_seed(length, ratio, seed) reproduces them.
    std::uint64_t seed = 0;

    /// 1 for kept positions, 0 for masked ones.
    std::vector<double> keep_indicator() const;
};

/// Number of masked positions for a feature vector of `length` at `ratio`.
std::size_t masked_count(std::size_t length, double ratio);

MaskSpec sample_mask(std::size_t length, double ratio, Rng& rng);
MaskSpec sample_mask_from_seed(std::size_t length, double ratio, std::uint64_t seed);

/// Zeroes masked positions of every row; trailing size must equal mask.length.
Tensor apply_mask(const Tensor& features, const MaskSpec& mask);

/// Differentiable masking of a (B, ...) batch whose per-row size is the mask length.
/// `masks` holds either one mask shared by all rows or one mask per row.
Var apply_masks(const Var& batch, std::span<const MaskSpec> masks);

enum class MaskTarget { features, pixels };

struct MaskConfig {
    /// Resolution of the discriminator block whose output is masked.
    std::size_t layer = 4;
    double ratio = 0.0;
    bool per_sample = true;
    MaskTarget target = MaskTarget::features;
};

/// Draws the masks for one discriminator call over `batch` rows of `length` features.
std::vector<MaskSpec> sample_batch_masks(std::size_t batch, std::size_t length, const MaskConfig& cfg, Rng& rng);

} // namespace fsgan
