#pragma once

// Source-domain pretraining and few-shot adaptation.
//
// One iteration = one discriminator step then one generator step. The combined
// objective is
//   adversarial(image level, subspace latents, masked D_t)
//   + adversarial(patch level, all latents)
//   + lambda_g * consistency(G_s, G_t) + lambda_d * consistency(D_s, D_t)

#include "fsgan/adversarial.hpp"
#include "fsgan/config.hpp"
#include "fsgan/data.hpp"
#include "fsgan/nets.hpp"
#include "fsgan/optimizer.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fsgan {

/// Objective components for one iteration. The un-prefixed fields are evaluated at
/// the start of the iteration (during the discriminator step); `g_*` are the
/// generator step's own values.
struct LossRecord {
    std::size_t iteration = 0;
    double adv_img = 0.0;
    double adv_patch = 0.0;
    double cdc_g = 0.0;
    double cdc_d = 0.0;
    double total = 0.0;
    double g_adv_img = 0.0;
    double g_adv_patch = 0.0;
    double g_cdc_g = 0.0;
    double g_cdc_d = 0.0;
    double g_total = 0.0;

    bool operator==(const LossRecord&) const = default;
};

enum class RunMode { pretrain, adapt };

struct TrainState {
    TrainConfig config;
    RunMode mode = RunMode::adapt;
    ModelPair models;
    Adam generator_optimizer;
    Adam discriminator_optimizer;
    AnchorSet anchors;
    Rng rng;
    std::size_t iteration = 0;
    std::vector<LossRecord> records;
    /// Fixed latents for sample grids and evaluation, carried from pretraining onward.
    Tensor noise_bank;
    /// Patch taps resolved from the band; empty when the patch term is off.
    std::vector<std::size_t> patch_taps;
};

/// Differentiable objective for one step plus its recorded components.
struct StepObjective {
    Var loss;
    double adv_img = 0.0;
    double adv_patch = 0.0;
    double cdc_g = 0.0;
    double cdc_d = 0.0;
};

/// Discriminator-step objective. Generated images are detached; cdc_g is evaluated for the record only.
StepObjective discriminator_objective(const ModelPair& models, const TrainConfig& cfg,
                                      std::span<const std::size_t> patch_taps, const Tensor& real,
                                      const LatentBatch& latents, Rng& rng);
/// Generator-step objective.
StepObjective generator_objective(const ModelPair& models, const TrainConfig& cfg,
                                  std::span<const std::size_t> patch_taps, const LatentBatch& latents, Rng& rng);

/// One D step then one G step. Throws NonFiniteLossError (with the offending record) on NaN/inf.
LossRecord training_step(TrainState& state, const Tensor& real_batch, const LatentBatch& d_latents,
                         const LatentBatch& g_latents);

/// Fresh pretraining state: models built from cfg, plain GAN settings forced.
TrainState init_pretraining(const TrainConfig& cfg);
/// Adaptation state from a (pretrained) source: targets copied from the source's trained models.
TrainState init_adaptation(const TrainState& source, const ImageDataset& target, const TrainConfig& cfg);

/// Config used for pretraining: lambda 0, no masks, no patch term, unrestricted latents.
TrainConfig plain_gan_config(TrainConfig cfg);

struct TrainHooks {
    std::function<void(const TrainState&, const LossRecord&)> on_record;
    /// Called every `checkpoint_every` iterations and at the end.
    std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs iterations until `state.iteration == until` (default: config.iterations).
void train(TrainState& state, const ImageDataset& data, const TrainHooks& hooks = {}, std::size_t until = 0);

/// Pretrains on a source dataset (>= 1000 images) and returns the final state.
TrainState pretrain(const ImageDataset& source, const TrainConfig& cfg, const TrainHooks& hooks = {});
/// Adapts a pretrained state to `target` (exactly zsub.k images).
TrainState adapt(const TrainState& source, const ImageDataset& target, const TrainConfig& cfg,
                 const TrainHooks& hooks = {});

inline constexpr std::size_t kMinPretrainImages = 1000;
inline constexpr std::size_t kNoiseBankSize = 64;

/// The generator used for sampling: the trained target.
const Generator& sampling_generator(const TrainState& state);

} // namespace fsgan
