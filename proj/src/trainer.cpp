#include "fsgan/trainer.hpp"

#include "fsgan/consistency.hpp"
#include "fsgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace fsgan {

namespace {

std::vector<std::size_t> union_taps(std::span<const std::size_t> a, std::span<const std::size_t> b)
{
    std::set<std::size_t> s(a.begin(), a.end());
    s.insert(b.begin(), b.end());
    return {s.rbegin(), s.rend()};
}

std::vector<std::size_t> all_rows(std::size_t n)
{
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

std::string describe(const LossRecord& r)
{
    std::ostringstream os;
    os << "iteration " << r.iteration << ": adv_img=" << r.adv_img << " adv_patch=" << r.adv_patch
       << " cdc_g=" << r.cdc_g << " cdc_d=" << r.cdc_d << " total=" << r.total << " g_total=" << r.g_total;
    return os.str();
}

bool finite(const LossRecord& r)
{
    for (double v : {r.adv_img, r.adv_patch, r.cdc_g, r.cdc_d, r.total, r.g_adv_img, r.g_adv_patch, r.g_cdc_g, r.g_cdc_d,
                     r.g_total})
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor make_noise_bank(std::size_t latent_dim, std::uint64_t seed)
{
    Rng rng(seed);
    Tensor bank({kNoiseBankSize, latent_dim});
    for (auto& v : bank.data) v = static_cast<float>(standard_normal(rng));
    return bank;
}

LatentBatch draw_latents(TrainState& s)
{
    const auto& c = s.config;
    if (c.zsub.enabled) return sample_latent(c.batch_size, c.zsub.p, s.anchors, s.rng);
    return sample_unrestricted_latent(c.batch_size, c.generator.latent_dim, s.rng);
}

Tensor draw_real(TrainState& s, const ImageDataset& data)
{
    std::vector<std::size_t> rows(s.config.batch_size);
    for (auto& r : rows) r = uniform_index(s.rng, data.size());
    return data.batch(rows);
}

} // namespace

TrainConfig plain_gan_config(TrainConfig cfg)
{
    cfg.lambda_g = 0.0;
    cfg.lambda_d = 0.0;
    cfg.mask.ratio = 0.0;
    cfg.patch.enabled = false;
    cfg.zsub.enabled = false;
    return cfg;
}

StepObjective discriminator_objective(const ModelPair& m, const TrainConfig& c, std::span<const std::size_t> patch_taps,
                                      const Tensor& real, const LatentBatch& latents, Rng& rng)
{
    const bool use_cdc_g = c.lambda_g > 0.0, use_cdc_d = c.lambda_d > 0.0;
    const auto gtaps = c.resolved_generator_taps();
    const auto dtaps = c.resolved_discriminator_taps();
    const std::vector<std::size_t> none;
    const bool patch = c.patch.enabled;
    const auto& disc = m.discriminator_target;

    const auto target = m.generator_target.forward(latents.z, use_cdc_g ? gtaps : none);
    const Var fake = target.images.detach();
    StepObjective out;

    GeneratorOutput source;
    if (use_cdc_g || use_cdc_d) source = m.generator_source.forward(latents.z, use_cdc_g ? gtaps : none);
    if (use_cdc_g) out.cdc_g = cdc_from_taps(target.taps, source.taps, gtaps).loss.item();

    const auto fake_taps = union_taps(patch ? patch_taps : none, use_cdc_d ? dtaps : none);
    const auto fake_out = disc.forward(fake, fake_taps);
    const Var real_var = Var::constant(real);
    const auto real_out = disc.forward(real_var, patch ? patch_taps : none);

    const auto rows = latents.image_level_rows();
    const Var fake_scores = image_level_scores(disc, fake, rows, c.mask, rng, &fake_out);
    const Var real_scores = image_level_scores(disc, real_var, all_rows(real.dim(0)), c.mask, rng, &real_out);
    Var d_image = adv_discriminator_loss(fake_scores, real_scores, c.adv_form);
    out.adv_img = d_image.item();
    out.loss = d_image;

    if (patch) {
        const auto fake_maps = patch_scores(disc, fake_out.taps, patch_taps);
        const auto real_maps = patch_scores(disc, real_out.taps, patch_taps);
        Var d_patch = patch_discriminator_loss(fake_maps, real_maps, c.adv_form);
        out.adv_patch = d_patch.item();
        out.loss = ops::add(out.loss, d_patch);
    }
    if (use_cdc_d) {
        const auto src = m.discriminator_source.forward(source.images, dtaps);
        Var cdc = cdc_from_taps(fake_out.taps, src.taps, dtaps).loss;
        out.cdc_d = cdc.item();
        out.loss = ops::add(out.loss, ops::scale(cdc, c.lambda_d));
    }
    return out;
}

StepObjective generator_objective(const ModelPair& m, const TrainConfig& c, std::span<const std::size_t> patch_taps,
                                  const LatentBatch& latents, Rng& rng)
{
    const bool use_cdc_g = c.lambda_g > 0.0;
    const bool use_cdc_d = c.lambda_d > 0.0 && !c.detach_d_in_g;
    const auto gtaps = c.resolved_generator_taps();
    const auto dtaps = c.resolved_discriminator_taps();
    const std::vector<std::size_t> none;
    const bool patch = c.patch.enabled;
    const auto& disc = m.discriminator_target;

    const auto target = m.generator_target.forward(latents.z, use_cdc_g ? gtaps : none);
    const Var& fake = target.images;
    StepObjective out;

    const auto fake_taps = union_taps(patch ? patch_taps : none, use_cdc_d ? dtaps : none);
    const bool reusable = c.mask.ratio == 0.0 ||
                          (c.mask.target == MaskTarget::features && c.mask.layer == disc.config().block_resolutions().back());
    DiscriminatorOutput fake_out;
    const bool need_full = !fake_taps.empty() || reusable;
    if (need_full) fake_out = disc.forward(fake, fake_taps);

    const auto rows = latents.image_level_rows();
    const Var scores = image_level_scores(disc, fake, rows, c.mask, rng, need_full ? &fake_out : nullptr);
    Var g_image = adv_generator_loss(scores, c.adv_form);
    out.adv_img = g_image.item();
    out.loss = g_image;

    if (patch) {
        const auto maps = patch_scores(disc, fake_out.taps, patch_taps);
        Var g_patch = patch_generator_loss(maps, c.adv_form);
        out.adv_patch = g_patch.item();
        out.loss = ops::add(out.loss, g_patch);
    }
    if (use_cdc_g || use_cdc_d) {
        const auto source = m.generator_source.forward(latents.z, use_cdc_g ? gtaps : none);
        if (use_cdc_g) {
            Var cdc = cdc_from_taps(target.taps, source.taps, gtaps).loss;
            out.cdc_g = cdc.item();
            out.loss = ops::add(out.loss, ops::scale(cdc, c.lambda_g));
        }
        if (use_cdc_d) {
            const auto src = m.discriminator_source.forward(source.images, dtaps);
            Var cdc = cdc_from_taps(fake_out.taps, src.taps, dtaps).loss;
            out.cdc_d = cdc.item();
            out.loss = ops::add(out.loss, ops::scale(cdc, c.lambda_d));
        }
    }
    return out;
}

LossRecord training_step(TrainState& s, const Tensor& real_batch, const LatentBatch& d_latents,
                         const LatentBatch& g_latents)
{
    auto& m = s.models;
    const auto& c = s.config;
    LossRecord rec;
    rec.iteration = s.iteration;

    m.generator_target.set_trainable(false);
    m.discriminator_target.set_trainable(true);
    m.discriminator_target.parameters().zero_grad();
    const auto d = discriminator_objective(m, c, s.patch_taps, real_batch, d_latents, s.rng);
    rec.adv_img = d.adv_img;
    rec.adv_patch = d.adv_patch;
    rec.cdc_g = d.cdc_g;
    rec.cdc_d = d.cdc_d;
    rec.total = rec.adv_img + rec.adv_patch + c.lambda_g * rec.cdc_g + c.lambda_d * rec.cdc_d;
    if (!std::isfinite(d.loss.item()) || !finite(rec)) {
        m.generator_target.set_trainable(true);
        throw NonFiniteLossError("non-finite discriminator loss at " + describe(rec));
    }
    backward(d.loss);
    s.discriminator_optimizer.step(m.discriminator_target.parameters());
    m.discriminator_target.parameters().zero_grad();

    m.discriminator_target.set_trainable(false);
    m.generator_target.set_trainable(true);
    m.generator_target.parameters().zero_grad();
    const auto g = generator_objective(m, c, s.patch_taps, g_latents, s.rng);
    rec.g_adv_img = g.adv_img;
    rec.g_adv_patch = g.adv_patch;
    rec.g_cdc_g = g.cdc_g;
    rec.g_cdc_d = g.cdc_d;
    rec.g_total = g.loss.item();
    m.discriminator_target.set_trainable(true);
    if (!finite(rec)) throw NonFiniteLossError("non-finite generator loss at " + describe(rec));
    backward(g.loss);
    s.generator_optimizer.step(m.generator_target.parameters());
    m.generator_target.parameters().zero_grad();

    s.records.push_back(rec);
    ++s.iteration;
    return rec;
}

namespace {

TrainState make_state(TrainConfig cfg, RunMode mode, ModelPair models)
{
    TrainState s{std::move(cfg), mode, std::move(models), {}, {}, {}, Rng(0), 0, {}, {}, {}};
    s.generator_optimizer = Adam(s.models.generator_target.parameters(), s.config.optimizer);
    s.discriminator_optimizer = Adam(s.models.discriminator_target.parameters(), s.config.optimizer);
    s.rng = Rng(s.config.seed);
    if (s.config.patch.enabled) s.patch_taps = select_patch_taps(s.config.discriminator, s.config.patch);
    return s;
}

} // namespace

TrainState init_pretraining(const TrainConfig& cfg_in)
{
    TrainConfig cfg = plain_gan_config(cfg_in);
    cfg.validate();
    const Generator g(cfg.generator);
    const Discriminator d(cfg.discriminator);
    TrainState s = make_state(cfg, RunMode::pretrain, ModelPair::from_source(g, d));
    s.noise_bank = make_noise_bank(cfg.generator.latent_dim, cfg.eval_seed);
    return s;
}

TrainState init_adaptation(const TrainState& source, const ImageDataset& target, const TrainConfig& cfg_in)
{
    TrainConfig cfg = cfg_in;
    cfg.generator = source.config.generator;
    cfg.discriminator = source.config.discriminator;
    cfg.validate();
    if (target.size() != cfg.zsub.k)
        throw ConfigError("target set has " + std::to_string(target.size()) + " images but zsub.k = " +
                          std::to_string(cfg.zsub.k) + " anchors; the shot count must match");
    if (target.resolution != cfg.generator.output_resolution)
        throw ConfigError("target images are " + std::to_string(target.resolution) + "px, model is " +
                          std::to_string(cfg.generator.output_resolution) + "px");
    const auto& src = sampling_generator(source);
    TrainState s = make_state(cfg, RunMode::adapt,
                              ModelPair::from_source(src, source.models.discriminator_target));
    // Anchors are drawn once, before any training randomness, and persisted.
    s.anchors = sample_anchors(cfg.zsub.k, cfg.generator.latent_dim, s.rng, cfg.zsub.sigma);
    s.noise_bank = source.noise_bank;
    return s;
}

const Generator& sampling_generator(const TrainState& state) { return state.models.generator_target; }

void train(TrainState& s, const ImageDataset& data, const TrainHooks& hooks, std::size_t until)
{
    if (until == 0) until = s.config.iterations;
    if (data.size() == 0) throw ConfigError("training data is empty");
    if (data.resolution != s.config.generator.output_resolution)
        throw ConfigError("training images are " + std::to_string(data.resolution) + "px, model is " +
                          std::to_string(s.config.generator.output_resolution) + "px");
    while (s.iteration < until) {
        const Tensor real = draw_real(s, data);
        const LatentBatch dl = draw_latents(s);
        const LatentBatch gl = draw_latents(s);
        const auto rec = training_step(s, real, dl, gl);
        if (hooks.on_record) hooks.on_record(s, rec);
        const auto every = s.config.checkpoint_every;
        if (hooks.on_checkpoint && every > 0 && s.iteration % every == 0 && s.iteration < until) hooks.on_checkpoint(s);
    }
    if (hooks.on_checkpoint) hooks.on_checkpoint(s);
}

TrainState pretrain(const ImageDataset& source, const TrainConfig& cfg, const TrainHooks& hooks)
{
    if (source.size() < kMinPretrainImages)
        throw ConfigError("pretraining needs at least " + std::to_string(kMinPretrainImages) + " source images, got " +
                          std::to_string(source.size()) +
                          "; use a larger image directory or a synthetic source domain (count >= 1000)");
    TrainState s = init_pretraining(cfg);
    train(s, source, hooks);
    return s;
}

TrainState adapt(const TrainState& source, const ImageDataset& target, const TrainConfig& cfg, const TrainHooks& hooks)
{
    TrainState s = init_adaptation(source, target, cfg);
    train(s, target, hooks);
    return s;
}

} // namespace fsgan
