#pragma once

#include "fsgan/autograd.hpp"
#include "fsgan/masking.hpp"
#include "fsgan/nets.hpp"
#include "fsgan/random.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fsgan {

// ---------------------------------------------------------------- latent subspace

inline constexpr double kDefaultSubSigma = 0.05;
inline constexpr double kDefaultSubFraction = 0.25;

/// k fixed latent points; the few-shot latent subspace is these plus small Gaussian noise.
struct AnchorSet {
    Tensor anchors; // (k, latent_dim)
    double sigma = kDefaultSubSigma;

    std::size_t k() const { return anchors.shape.empty() ? 0 : anchors.dim(0); }
    std::size_t latent_dim() const { return anchors.rank() == 2 ? anchors.dim(1) : 0; }
};

AnchorSet sample_anchors(std::size_t k, std::size_t latent_dim, Rng& rng, double sigma = kDefaultSubSigma);

struct LatentBatch {
    Tensor z; // (B, latent_dim)
    std::vector<bool> from_sub;
    std::vector<std::optional<std::size_t>> anchor_index;
    /// Set when no subspace restriction applies: every sample faces the image-level discriminator.
    bool unrestricted = false;

    std::size_t size() const { return from_sub.size(); }
    /// Rows that the full (image-level) discriminator judges.
    std::vector<std::size_t> image_level_rows() const;
};

/// round(p * batch), at least 1 when p > 0.
std::size_t sub_sample_count(std::size_t batch, double p_sub);

/// The first sub_sample_count(B, p) rows are drawn around uniformly chosen anchors,
/// the rest are standard normal.
LatentBatch sample_latent(std::size_t batch, double p_sub, const AnchorSet& anchors, Rng& rng);

/// Plain N(0, I) latents with no subspace restriction.
LatentBatch sample_unrestricted_latent(std::size_t batch, std::size_t latent_dim, Rng& rng);

// ---------------------------------------------------------------- adversarial loss

enum class AdvForm {
    /// D(G(z)) - D(x) for the discriminator, -D(G(z)) for the generator.
    score_diff,
    /// softplus(D(G(z))) + softplus(-D(x)) and softplus(-D(G(z))).
    softplus,
};

struct AdvLoss {
    double generator = 0.0;
    std::optional<double> discriminator; // absent without real scores
};

AdvLoss adv_loss(std::span<const double> fake_scores, std::span<const double> real_scores,
                 AdvForm form = AdvForm::score_diff);

Var adv_generator_loss(const Var& fake_scores, AdvForm form);
Var adv_discriminator_loss(const Var& fake_scores, const Var& real_scores, AdvForm form);

// ---------------------------------------------------------------- patch-level discrimination

struct PatchHeadConfig {
    bool enabled = true;
    /// Receptive-field band in pixels; unset means the 22..61-of-256 band scaled to the resolution.
    std::optional<std::pair<double, double>> band;
};

/// The 22..61 pixel band at 256x256, scaled to `resolution`.
std::pair<double, double> default_patch_band(std::size_t resolution);

/// Blocks whose nominal receptive field lies in [round(lo), round(hi)].
/// Throws ConfigError if there are none.
std::vector<std::size_t> select_patch_taps(const DiscriminatorConfig& cfg, std::pair<double, double> band);
std::vector<std::size_t> select_patch_taps(const DiscriminatorConfig& cfg, const PatchHeadConfig& patch);

/// Score maps (B, 1, r, r) for each selected tap in `activations`.
std::vector<Var> patch_scores(const Discriminator& disc, const std::map<std::size_t, Var>& activations,
                              std::span<const std::size_t> taps);

/// Mean over taps of the per-location adversarial loss.
Var patch_generator_loss(std::span<const Var> fake_maps, AdvForm form);
Var patch_discriminator_loss(std::span<const Var> fake_maps, std::span<const Var> real_maps, AdvForm form);

// ---------------------------------------------------------------- composite objective

struct AdvSettings {
    AdvForm form = AdvForm::score_diff;
    MaskConfig mask;
    bool patch_enabled = true;
    std::vector<std::size_t> patch_taps;
};

/// Image-level scores of the full discriminator for `rows` of `images`, with freshly sampled
/// masks. `unmasked`, a prior mask-free forward of all of `images`, is reused where the result
/// is bitwise the same: no masking at all, or masking on the last block.
Var image_level_scores(const Discriminator& disc, const Var& images, std::span<const std::size_t> rows,
                       const MaskConfig& mask, Rng& rng, const DiscriminatorOutput* unmasked = nullptr);

struct CompositeAdv {
    Var loss_g;
    Var loss_d;
    Var g_image, g_patch, d_image, d_patch; // undefined when the term is off
};

/// Image-level term on the subspace rows only (masked target discriminator), patch-level
/// term on all rows; real images enter both.
CompositeAdv composite_adv(const ModelPair& models, const LatentBatch& latents, const Tensor& real,
                           const AdvSettings& settings, Rng& rng);

} // namespace fsgan
