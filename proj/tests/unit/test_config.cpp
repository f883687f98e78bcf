#include "fsgan/config.hpp"
#include "fsgan/errors.hpp"

#include <doctest.h>

using namespace fsgan;

TEST_CASE("defaults follow the documented values")
{
    const TrainConfig c;
    CHECK(c.lambda_g == 1000.0);
    CHECK(c.lambda_d == 1000.0);
    CHECK(c.mask.layer == 4);
    CHECK(c.mask.ratio == 0.75);
    CHECK(c.zsub.p == 0.25);
    CHECK(c.zsub.sigma == 0.05);
    CHECK(c.optimizer.lr == 0.002);
    CHECK(c.optimizer.beta1 == 0.0);
    CHECK(c.optimizer.beta2 == 0.99);
    CHECK(c.batch_size == 4);
    CHECK(c.adv_form == AdvForm::score_diff);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("parsing settings, comments and fractions")
{
    const auto c = parse_config("# experiment\n"
                                "cdc.lambda = 2500\n"
                                "mask.ratio = 5/8   \n"
                                "\n"
                                "mask.layer = 8\n"
                                "adv.form = softplus\n"
                                "adv.patch.band = 3,9\n"
                                "model.g_channels = 32, 16, 8\n"
                                "zsub.enabled = false\n");
    CHECK(c.lambda_g == 2500.0);
    CHECK(c.lambda_d == 2500.0);
    CHECK(c.mask.ratio == 0.625);
    CHECK(c.mask.layer == 8);
    CHECK(c.adv_form == AdvForm::softplus);
    CHECK(c.patch.band == std::pair{3.0, 9.0});
    CHECK(c.generator.channels_per_block == std::vector<std::size_t>{32, 16, 8});
    CHECK_FALSE(c.zsub.enabled);
}

TEST_CASE("text form round-trips")
{
    auto c = parse_config("cdc.lambda_g = 1234.5\nmask.ratio = 7/8\ntrain.seed = 99\nadv.patch.band = 2.5,7.25\n"
                          "cdc.generator_taps = 16,32\nmask.target = pixels\n");
    const auto text = to_config_text(c);
    CHECK(to_config_text(parse_config(text)) == text);
    CHECK(parse_config(text).mask.ratio == 7.0 / 8.0);
}

TEST_CASE("bad settings name the key")
{
    auto message = [](const std::string& text) {
        try {
            (void)parse_config(text).validate();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("nope = 1\n").find("nope") != std::string::npos);
    CHECK(message("mask.ratio = abc\n").find("mask.ratio") != std::string::npos);
    CHECK(message("mask.ratio = 1.5\n").find("mask.ratio") != std::string::npos);
    CHECK(message("cdc.lambda = -1\n").find("lambda") != std::string::npos);
    CHECK(message("mask.layer = 12\n").find("mask.layer") != std::string::npos);
    CHECK(message("train.iterations = 0\n").find("iterations") != std::string::npos);
    CHECK(message("missing equals\n").find("line 1") != std::string::npos);
}
