#include "fsgan/adversarial.hpp"

#include "fsgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fsgan {

AnchorSet sample_anchors(std::size_t k, std::size_t latent_dim, Rng& rng, double sigma)
{
    if (k < 1) throw DomainError("latent subspace needs at least one anchor");
    if (latent_dim < 1) throw DomainError("latent_dim must be positive");
    if (!(sigma >= 0.0)) throw DomainError("subspace sigma must be nonnegative");
    AnchorSet set{Tensor({k, latent_dim}), sigma};
    for (auto& v : set.anchors.data) v = standard_normal(rng);
    return set;
}

std::vector<std::size_t> LatentBatch::image_level_rows() const
{
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < from_sub.size(); ++i)
        if (unrestricted || from_sub[i]) rows.push_back(i);
    return rows;
}

std::size_t sub_sample_count(std::size_t batch, double p_sub)
{
    if (!(p_sub >= 0.0 && p_sub <= 1.0)) throw DomainError("subspace fraction must lie in [0, 1]");
    if (p_sub == 0.0 || batch == 0) return 0;
    const auto n = static_cast<std::size_t>(std::llround(p_sub * static_cast<double>(batch)));
    return std::clamp<std::size_t>(n, 1, batch);
}

LatentBatch sample_latent(std::size_t batch, double p_sub, const AnchorSet& anchors, Rng& rng)
{
    if (anchors.k() == 0) throw DomainError("empty anchor set");
    const auto dim = anchors.latent_dim();
    const auto flagged = sub_sample_count(batch, p_sub);
    LatentBatch out{Tensor({batch, dim}), std::vector<bool>(batch, false),
                    std::vector<std::optional<std::size_t>>(batch), false};
    for (std::size_t i = 0; i < batch; ++i) {
        auto row = out.z.row(i);
        if (i < flagged) {
            const auto a = uniform_index(rng, anchors.k());
            const auto anchor = anchors.anchors.row(a);
            for (std::size_t j = 0; j < dim; ++j) row[j] = anchor[j] + anchors.sigma * standard_normal(rng);
            out.from_sub[i] = true;
            out.anchor_index[i] = a;
        } else {
            for (auto& v : row) v = standard_normal(rng);
        }
    }
    return out;
}

LatentBatch sample_unrestricted_latent(std::size_t batch, std::size_t latent_dim, Rng& rng)
{
    LatentBatch out{Tensor({batch, latent_dim}), std::vector<bool>(batch, false),
                    std::vector<std::optional<std::size_t>>(batch), true};
    for (auto& v : out.z.data) v = standard_normal(rng);
    return out;
}

// ---------------------------------------------------------------- losses

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> out(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

double mean_of(std::span<const double> v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

AdvLoss adv_loss(std::span<const double> fake_scores, std::span<const double> real_scores, AdvForm form)
{
    if (fake_scores.empty()) throw DomainError("adversarial loss needs at least one fake score");
    AdvLoss out;
    if (form == AdvForm::score_diff) {
        out.generator = -mean_of(fake_scores);
        if (!real_scores.empty()) out.discriminator = mean_of(fake_scores) - mean_of(real_scores);
    } else {
        double g = 0.0, df = 0.0, dr = 0.0;
        for (double s : fake_scores) {
            g += softplus(-s);
            df += softplus(s);
        }
        for (double s : real_scores) dr += softplus(-s);
        const auto nf = static_cast<double>(fake_scores.size());
        out.generator = g / nf;
        if (!real_scores.empty()) out.discriminator = df / nf + dr / static_cast<double>(real_scores.size());
    }
    return out;
}

Var adv_generator_loss(const Var& fake_scores, AdvForm form)
{
    if (fake_scores.value().size() == 0) throw DomainError("adversarial loss needs at least one fake score");
    if (form == AdvForm::score_diff) return ops::scale(ops::mean(fake_scores), -1.0);
    return ops::mean(ops::softplus(ops::scale(fake_scores, -1.0)));
}

Var adv_discriminator_loss(const Var& fake_scores, const Var& real_scores, AdvForm form)
{
    if (fake_scores.value().size() == 0 || real_scores.value().size() == 0)
        throw DomainError("discriminator loss needs fake and real scores");
    if (form == AdvForm::score_diff) return ops::sub(ops::mean(fake_scores), ops::mean(real_scores));
    return ops::add(ops::mean(ops::softplus(fake_scores)), ops::mean(ops::softplus(ops::scale(real_scores, -1.0))));
}

// ---------------------------------------------------------------- patches

std::pair<double, double> default_patch_band(std::size_t resolution)
{
    const auto r = static_cast<double>(resolution);
    return {r * 22.0 / 256.0, r * 61.0 / 256.0};
}

std::vector<std::size_t> select_patch_taps(const DiscriminatorConfig& cfg, std::pair<double, double> band)
{
    const auto lo = std::llround(band.first);
    const auto hi = std::llround(band.second);
    if (lo > hi) throw ConfigError("patch band is empty");
    std::vector<std::size_t> taps;
    for (auto r : cfg.block_resolutions()) {
        const auto size = static_cast<long long>(receptive_field(cfg, r).size);
        if (size >= lo && size <= hi) taps.push_back(r);
    }
    if (taps.empty())
        throw ConfigError("no discriminator block has a receptive field within the patch band [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "] pixels");
    return taps;
}

std::vector<std::size_t> select_patch_taps(const DiscriminatorConfig& cfg, const PatchHeadConfig& patch)
{
    return select_patch_taps(cfg, patch.band.value_or(default_patch_band(cfg.input_resolution)));
}

std::vector<Var> patch_scores(const Discriminator& disc, const std::map<std::size_t, Var>& activations,
                              std::span<const std::size_t> taps)
{
    std::vector<Var> maps;
    maps.reserve(taps.size());
    for (auto t : taps) {
        const auto it = activations.find(t);
        if (it == activations.end()) throw ConfigError("patch tap " + std::to_string(t) + " missing from forward outputs");
        maps.push_back(disc.patch_scores(t, it->second));
    }
    return maps;
}

Var patch_generator_loss(std::span<const Var> fake_maps, AdvForm form)
{
    if (fake_maps.empty()) throw ConfigError("patch loss without patch taps");
    Var total;
    for (const auto& m : fake_maps) {
        Var term = adv_generator_loss(m, form);
        total = total.defined() ? ops::add(total, term) : term;
    }
    return ops::scale(total, 1.0 / static_cast<double>(fake_maps.size()));
}

Var patch_discriminator_loss(std::span<const Var> fake_maps, std::span<const Var> real_maps, AdvForm form)
{
    if (fake_maps.empty() || fake_maps.size() != real_maps.size()) throw ConfigError("mismatched patch score maps");
    Var total;
    for (std::size_t i = 0; i < fake_maps.size(); ++i) {
        Var term = adv_discriminator_loss(fake_maps[i], real_maps[i], form);
        total = total.defined() ? ops::add(total, term) : term;
    }
    return ops::scale(total, 1.0 / static_cast<double>(fake_maps.size()));
}

// ---------------------------------------------------------------- composite

Var image_level_scores(const Discriminator& disc, const Var& images, std::span<const std::size_t> rows,
                       const MaskConfig& mask, Rng& rng, const DiscriminatorOutput* unmasked)
{
    if (rows.empty()) throw DomainError("image-level scores requested for no rows");
    const bool all_rows = rows.size() == images.shape().at(0);
    auto subset = [&](const Var& v) { return all_rows ? v : ops::gather_rows(v, rows); };
    const auto& cfg = disc.config();

    if (mask.ratio == 0.0) {
        if (unmasked) return subset(unmasked->scores);
        return disc.forward(subset(images)).scores;
    }
    const auto batch = rows.size();
    if (mask.target == MaskTarget::pixels) {
        const Var picked = subset(images);
        const auto width = picked.value().row_size();
        const auto masks = sample_batch_masks(batch, width, mask, rng);
        return disc.forward(ops::reshape(apply_masks(ops::reshape(picked, {batch, width}), masks), picked.shape())).scores;
    }
    const auto masks = sample_batch_masks(batch, cfg.channels_at(mask.layer) * mask.layer * mask.layer, mask, rng);
    if (unmasked && mask.layer == cfg.block_resolutions().back())
        return disc.score_head(apply_masks(subset(unmasked->final_features), masks));
    return disc.forward(subset(images), {}, masks, mask.layer).scores;
}

CompositeAdv composite_adv(const ModelPair& models, const LatentBatch& latents, const Tensor& real,
                           const AdvSettings& settings, Rng& rng)
{
    const auto rows = latents.image_level_rows();
    if (rows.empty()) throw DomainError("image-level adversarial term has no subspace samples in the batch");
    const auto& disc = models.discriminator_target;
    const Var fake = models.generator_target.forward(latents.z).images;
    const Var real_var = Var::constant(real);
    const std::vector<std::size_t> no_taps;
    const auto& taps = settings.patch_enabled ? settings.patch_taps : no_taps;

    const auto fake_out = disc.forward(fake, taps);
    const auto real_out = disc.forward(real_var, taps);

    CompositeAdv out;
    const Var fake_scores = image_level_scores(disc, fake, rows, settings.mask, rng, &fake_out);
    const std::vector<std::size_t> real_rows = all_indices(real.dim(0));
    const Var real_scores = image_level_scores(disc, real_var, real_rows, settings.mask, rng, &real_out);
    out.g_image = adv_generator_loss(fake_scores, settings.form);
    out.d_image = adv_discriminator_loss(fake_scores, real_scores, settings.form);
    out.loss_g = out.g_image;
    out.loss_d = out.d_image;

    if (settings.patch_enabled) {
        const auto fake_maps = patch_scores(disc, fake_out.taps, taps);
        const auto real_maps = patch_scores(disc, real_out.taps, taps);
        out.g_patch = patch_generator_loss(fake_maps, settings.form);
        out.d_patch = patch_discriminator_loss(fake_maps, real_maps, settings.form);
        out.loss_g = ops::add(out.loss_g, out.g_patch);
        out.loss_d = ops::add(out.loss_d, out.d_patch);
    }
    return out;
}

} // namespace fsgan
