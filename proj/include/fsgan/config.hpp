#pragma once

// Training/evaluation configuration and its flat `key = value` text form.
//
//   # comment
//   cdc.lambda = 1000
//   mask.ratio = 0.75
//   cdc.generator_taps = 8,16,32
//
// Keys (defaults in parentheses):
//   cdc.lambda            sets cdc.lambda_g and cdc.lambda_d
//   cdc.lambda_g (1000)   cdc.lambda_d (1000)   cdc.detach_d_in_g (false)
//   cdc.generator_taps    (all generator blocks)
//   cdc.discriminator_taps (model.d_taps)
//   mask.layer (4)  mask.ratio (0.75)  mask.per_sample (true)  mask.target (features|pixels)
//   adv.form (score_diff|softplus)  adv.patch.enabled (true)  adv.patch.band (auto | lo,hi)
//   zsub.enabled (true)  zsub.k (10)  zsub.p (0.25)  zsub.sigma (0.05)
//   optim.lr (0.002)  optim.beta1 (0.0)  optim.beta2 (0.99)
//   train.iterations (1500)  train.batch_size (4)  train.seed (0)
//   train.log_every (100)  train.checkpoint_every (0 = never)
//   model.latent_dim (64)  model.resolution (32)  model.g_channels (64,32,16)
//   model.d_channels (16,32,64)  model.d_taps (16,8)  model.g_seed (1)  model.d_seed (2)
//   eval.n (1000)  eval.seed (1234)

#include "fsgan/adversarial.hpp"
#include "fsgan/masking.hpp"
#include "fsgan/nets.hpp"
#include "fsgan/optimizer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fsgan {

struct ZsubConfig {
    bool enabled = true;
    std::size_t k = 10;
    double p = kDefaultSubFraction;
    double sigma = kDefaultSubSigma;
};

struct TrainConfig {
    double lambda_g = 1000.0;
    double lambda_d = 1000.0;
    bool detach_d_in_g = false;
    std::vector<std::size_t> generator_taps;
    std::vector<std::size_t> discriminator_taps;

    MaskConfig mask{4, 0.75, true, MaskTarget::features};
    ZsubConfig zsub;
    PatchHeadConfig patch;
    AdvForm adv_form = AdvForm::score_diff;
    AdamSettings optimizer;

    std::size_t iterations = 1500;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    std::size_t checkpoint_every = 0;

    GeneratorConfig generator;
    DiscriminatorConfig discriminator;

    std::size_t eval_n = 1000;
    std::uint64_t eval_seed = 1234;

    /// Throws ConfigError naming the offending key.
    void validate() const;
    /// Generator taps used for the consistency loss (all blocks when unset).
    std::vector<std::size_t> resolved_generator_taps() const;
    std::vector<std::size_t> resolved_discriminator_taps() const;
};

/// Applies one `key = value` setting. Throws ConfigError for unknown keys or bad values.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Every key with its current value; parse_config(to_config_text(c)) == c.
std::string to_config_text(const TrainConfig& cfg);

std::string to_string(AdvForm form);
std::string to_string(MaskTarget target);

} // namespace fsgan
