#pragma once

// Small progressive convolutional generator and discriminator.
//
// Layers are keyed by the spatial resolution of their output ("block N" is the
// block whose output is N x N), so tap and mask settings read like the ablation
// vocabulary: mask at block 4, discriminator consistency taps at blocks 16 and 8.

#include "fsgan/autograd.hpp"
#include "fsgan/masking.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace fsgan {

inline constexpr double kLeakySlope = 0.2;

struct GeneratorConfig {
    std::size_t latent_dim = 64;
    std::size_t base_resolution = 4;
    std::size_t output_resolution = 32;
    std::vector<std::size_t> channels_per_block{64, 32, 16};
    std::uint64_t seed = 1;

    /// Throws ConfigError when the resolution chain or channel list is inconsistent.
    void validate() const;
    /// Output resolution of each upsampling block, shallow to deep.
    std::vector<std::size_t> block_resolutions() const;
    bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
    std::size_t input_resolution = 32;
    std::vector<std::size_t> channels_per_block{16, 32, 64};
    std::set<std::size_t> tap_resolutions{16, 8};
    std::uint64_t seed = 2;

    void validate() const;
    /// Output resolution of each downsampling block, shallow to deep; ends at 4.
    std::vector<std::size_t> block_resolutions() const;
    /// Flattened size of the last block's output (channels * 4 * 4).
    std::size_t final_feature_count() const;
    std::size_t channels_at(std::size_t resolution) const;
    bool operator==(const DiscriminatorConfig&) const = default;
};

struct NamedParameter {
    std::string name;
    Var value;
};

/// Ordered parameter list with deep-copy value semantics.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet& other);
    ParameterSet& operator=(const ParameterSet& other);
    ParameterSet(ParameterSet&&) noexcept = default;
    ParameterSet& operator=(ParameterSet&&) noexcept = default;

    const Var& add(std::string name, Tensor value);
    const Var& get(const std::string& name) const;
    std::span<NamedParameter> items() { return params_; }
    std::span<const NamedParameter> items() const { return params_; }
    std::size_t scalar_count() const;

    void set_requires_grad(bool on);
    void zero_grad();
    /// Bitwise equality of names, shapes and values.
    bool equal_values(const ParameterSet& other) const;
    /// Order-dependent FNV-1a hash over names and raw value bytes.
    std::uint64_t hash() const;

private:
    std::vector<NamedParameter> params_;
};

struct GeneratorOutput {
    /// (B, 3, R, R) in [-1, 1].
    Var images;
    std::map<std::size_t, Var> taps;
};

struct DiscriminatorOutput {
    /// (B) image-level realism scores.
    Var scores;
    /// Block outputs keyed by resolution, captured before any mask.
    std::map<std::size_t, Var> taps;
    /// (B, F) flattened last-block output as seen by the score head (after masking).
    Var final_features;
};

class Generator {
public:
    explicit Generator(GeneratorConfig cfg);

    const GeneratorConfig& config() const { return cfg_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    GeneratorOutput forward(const Var& z, std::span<const std::size_t> taps = {}) const;
    GeneratorOutput forward(const Tensor& z, std::span<const std::size_t> taps = {}) const;

    bool frozen() const { return frozen_; }
    void set_trainable(bool on);
    /// Permanently disables gradients for this instance.
    void freeze();

private:
    GeneratorConfig cfg_;
    ParameterSet params_;
    bool frozen_ = false;
};

class Discriminator {
public:
    explicit Discriminator(DiscriminatorConfig cfg);

    const DiscriminatorConfig& config() const { return cfg_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    /// `masks` (empty, one shared, or one per image) zero features of the block output at
    /// `mask_layer` before the rest of the stack runs. Taps are recorded before masking.
    DiscriminatorOutput forward(const Var& images, std::span<const std::size_t> taps = {},
                                std::span<const MaskSpec> masks = {}, std::size_t mask_layer = 4) const;

    /// 1x1 affine score map (B, 1, r, r) on the block-r activation.
    Var patch_scores(std::size_t resolution, const Var& activation) const;
    Var score_head(const Var& final_features) const;

    bool frozen() const { return frozen_; }
    void set_trainable(bool on);
    void freeze();

private:
    DiscriminatorConfig cfg_;
    ParameterSet params_;
    bool frozen_ = false;
};

Generator build_generator(const GeneratorConfig& cfg);
Discriminator build_discriminator(const DiscriminatorConfig& cfg);
Generator clone_frozen(const Generator& model);
Discriminator clone_frozen(const Discriminator& model);

/// Frozen sources plus trainable targets that start as exact copies of them.
struct ModelPair {
    Generator generator_source;
    Generator generator_target;
    Discriminator discriminator_source;
    Discriminator discriminator_target;

    static ModelPair from_source(const Generator& g, const Discriminator& d);
};

struct FeatureTapSet {
    std::vector<std::size_t> generator_taps;
    std::vector<std::size_t> discriminator_taps;

    /// Throws ConfigError if empty or a tap does not name a real block.
    void validate(const GeneratorConfig& g, const DiscriminatorConfig& d) const;
};

/// Image-space footprint of one unit at a discriminator block output.
struct ReceptiveField {
    /// Nominal side length in pixels, ignoring image borders.
    std::size_t size = 1;
    /// Pixel stride between neighbouring units.
    std::size_t jump = 1;
    /// Pixel coordinate of the first row/column covered by unit 0 (may be negative).
    std::ptrdiff_t first = 0;

    /// Inclusive pixel range [lo, hi] covered by unit `u`, clipped to [0, extent).
    std::pair<std::size_t, std::size_t> span_of(std::size_t u, std::size_t extent) const;
};

ReceptiveField receptive_field(const DiscriminatorConfig& cfg, std::size_t resolution);

} // namespace fsgan
