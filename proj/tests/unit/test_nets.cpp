#include "support.hpp"

#include "fsgan/errors.hpp"

#include <doctest.h>

using namespace fsgan;
using namespace fsgan::testing;

TEST_CASE("generator output shape follows the config")
{
    GeneratorConfig cfg;
    const Generator g = build_generator(cfg);
    Rng rng(1);
    const auto out = g.forward(random_tensor({4, 64}, rng), cfg.block_resolutions());
    CHECK(out.images.shape() == Shape{4, 3, 32, 32});
    for (const auto& [res, act] : out.taps) CHECK(act.shape()[0] == 4);
    for (double v : out.images.value().data) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("building twice with one seed gives identical parameters")
{
    CHECK(build_generator({}).parameters().equal_values(build_generator({}).parameters()));
    CHECK(build_discriminator({}).parameters().equal_values(build_discriminator({}).parameters()));
    GeneratorConfig other;
    other.seed = 5;
    CHECK_FALSE(build_generator({}).parameters().equal_values(build_generator(other).parameters()));
}

TEST_CASE("invalid configurations are rejected")
{
    GeneratorConfig g;
    g.output_resolution = 48;
    CHECK_THROWS_AS(build_generator(g), ConfigError);
    DiscriminatorConfig d;
    d.tap_resolutions = {128};
    CHECK_THROWS_AS(build_discriminator(d), ConfigError);
}

TEST_CASE("discriminator feature count and taps")
{
    DiscriminatorConfig d;
    d.channels_per_block = {16, 32, 512};
    CHECK(d.final_feature_count() == 8192);
    const Discriminator disc = build_discriminator({});
    Rng rng(2);
    const std::vector<std::size_t> taps{16, 8};
    const auto out = disc.forward(Var::constant(random_tensor({2, 3, 32, 32}, rng)), taps);
    CHECK(out.taps.at(16).shape() == Shape{2, 16, 16, 16});
    CHECK(out.taps.at(8).shape() == Shape{2, 32, 8, 8});
    CHECK(out.scores.shape() == Shape{2});
}

TEST_CASE("identical latents give identical rows in every tap")
{
    const Generator g = build_generator({});
    Tensor z({2, 64}, 0.0);
    const auto out = g.forward(z, g.config().block_resolutions());
    for (const auto& [res, act] : out.taps) {
        const auto& v = act.value();
        CHECK(std::equal(v.row(0).begin(), v.row(0).end(), v.row(1).begin()));
    }
}

TEST_CASE("masking at the last block")
{
    const Discriminator disc = build_discriminator({});
    Rng rng(3);
    const Var x = Var::constant(random_tensor({3, 3, 32, 32}, rng, 0.5));
    const std::vector<std::size_t> taps{16, 8};
    const auto plain = disc.forward(x, taps);
    const std::size_t f = disc.config().final_feature_count();

    SUBCASE("ratio 0 is the identity")
    {
        const std::vector<MaskSpec> m{sample_mask(f, 0.0, rng)};
        CHECK(disc.forward(x, taps, m, 4).scores.value() == plain.scores.value());
    }
    SUBCASE("ratio 1 makes the score independent of the image")
    {
        const std::vector<MaskSpec> m{sample_mask(f, 1.0, rng)};
        const auto s = disc.forward(x, taps, m, 4).scores.value();
        const Var zeros = Var::constant(Tensor({1, f}, 0.0));
        const double head = disc.score_head(zeros).value().data[0];
        for (double v : s.data) CHECK(v == head);
    }
    SUBCASE("taps upstream of the mask are untouched")
    {
        const auto masks = sample_batch_masks(3, f, MaskConfig{4, 0.75, true, MaskTarget::features}, rng);
        const auto masked = disc.forward(x, taps, masks, 4);
        CHECK(masked.taps.at(16).value() == plain.taps.at(16).value());
        CHECK(masked.taps.at(8).value() == plain.taps.at(8).value());
        CHECK_FALSE(masked.scores.value() == plain.scores.value());
    }
}

TEST_CASE("frozen clones carry no gradient and keep their values")
{
    Generator g = build_generator(tiny_generator());
    Generator frozen = clone_frozen(g);
    CHECK(frozen.frozen());
    CHECK_THROWS(frozen.set_trainable(true));
    Rng rng(4);
    const Tensor z = random_tensor({2, 8}, rng);
    CHECK(frozen.forward(z).images.value() == g.forward(z).images.value());
    CHECK_FALSE(frozen.forward(z).images.requires_grad());
    CHECK(clone_frozen(frozen).parameters().equal_values(frozen.parameters()));

    perturb(g.parameters(), rng, 0.1);
    CHECK_FALSE(frozen.parameters().equal_values(g.parameters()));
}

TEST_CASE("model pair targets start as trainable copies of frozen sources")
{
    const auto pair = ModelPair::from_source(build_generator(tiny_generator()), build_discriminator(tiny_discriminator()));
    CHECK(pair.generator_source.frozen());
    CHECK(pair.discriminator_source.frozen());
    CHECK_FALSE(pair.generator_target.frozen());
    CHECK(pair.generator_target.parameters().equal_values(pair.generator_source.parameters()));
    CHECK(pair.discriminator_target.parameters().equal_values(pair.discriminator_source.parameters()));
}

TEST_CASE("nominal receptive fields of the discriminator taps")
{
    const DiscriminatorConfig d;
    CHECK(receptive_field(d, 16).size == 4);
    CHECK(receptive_field(d, 8).size == 10);
    CHECK(receptive_field(d, 4).size == 22);
    CHECK(receptive_field(d, 16).jump == 2);
    CHECK(receptive_field(d, 4).jump == 8);
}
