#include "support.hpp"

#include "fsgan/checkpoint.hpp"
#include "fsgan/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <iterator>

using namespace fsgan;
using namespace fsgan::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("fsgan_ckpt_" + name);
    fs::remove_all(p);
    return p;
}

ImageDataset images(std::size_t n, std::uint64_t seed, bool target = false)
{
    SynthDomainSpec s;
    s.count = n;
    s.seed = seed;
    if (target) s.target_shift = TargetShift{};
    return synth_domain(s);
}

TrainState adapted(std::size_t iterations)
{
    TrainConfig c = tiny_config();
    c.iterations = 2;
    TrainState pre = init_pretraining(c);
    train(pre, images(32, 1));
    c.iterations = iterations;
    TrainState s = init_adaptation(pre, images(3, 50, true), c);
    train(s, images(3, 50, true), {}, iterations / 2);
    return s;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void expect_same_directory(const fs::path& a, const fs::path& b)
{
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++files;
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
    CHECK(files == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{})));
}

void edit_manifest(const fs::path& dir, const std::function<void(nlohmann::json&)>& edit)
{
    auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    edit(j);
    std::ofstream(dir / "manifest.json") << j.dump(2);
}

std::string load_error(const fs::path& dir)
{
    try {
        (void)load_checkpoint(dir);
    } catch (const LoadError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("float32 files round-trip")
{
    const auto dir = scratch("array");
    fs::create_directories(dir);
    Tensor t({2, 3}, std::vector<double>{0.5, -1.25, 3.0, 1e-3f, 7.0, -0.0});
    write_float32_file(dir / "a.bin", t);
    CHECK(fs::file_size(dir / "a.bin") == 24);
    CHECK(read_float32_file(dir / "a.bin", {2, 3}) == t);
    CHECK_THROWS_AS(read_float32_file(dir / "a.bin", {4, 3}), LoadError);
}

TEST_CASE("save, load, save gives byte-identical files")
{
    const TrainState s = adapted(4);
    const auto a = scratch("first"), b = scratch("second");
    save_checkpoint(s, a);
    const TrainState loaded = load_checkpoint(a);
    save_checkpoint(loaded, b);
    expect_same_directory(a, b);

    CHECK(loaded.iteration == s.iteration);
    CHECK(loaded.records == s.records);
    CHECK(loaded.anchors.anchors == s.anchors.anchors);
    CHECK(rng_state(loaded.rng) == rng_state(s.rng));
    CHECK(loaded.noise_bank == s.noise_bank);
    CHECK(loaded.models.generator_source.parameters().equal_values(s.models.generator_source.parameters()));
    CHECK(loaded.models.discriminator_target.parameters().equal_values(s.models.discriminator_target.parameters()));
    CHECK(loaded.generator_optimizer.first_moments() == s.generator_optimizer.first_moments());
    CHECK(loaded.discriminator_optimizer.second_moments() == s.discriminator_optimizer.second_moments());
    CHECK(loaded.generator_optimizer.steps() == s.generator_optimizer.steps());
    CHECK(loaded.models.generator_source.frozen());
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run")
{
    TrainState straight = adapted(6);
    TrainState resumed = straight;
    train(straight, images(3, 50, true));

    const auto dir = scratch("resume");
    save_checkpoint(resumed, dir);
    TrainState back = load_checkpoint(dir);
    train(back, images(3, 50, true));

    CHECK(back.records == straight.records);
    CHECK(back.models.generator_target.parameters().equal_values(straight.models.generator_target.parameters()));
    CHECK(back.models.discriminator_target.parameters().equal_values(straight.models.discriminator_target.parameters()));
}

TEST_CASE("pretraining checkpoints store only the trained pair")
{
    TrainConfig c = tiny_config();
    c.iterations = 1;
    TrainState s = init_pretraining(c);
    train(s, images(16, 2));
    const auto dir = scratch("pretrain");
    save_checkpoint(s, dir);
    CHECK(fs::exists(dir / "generator_target.fc.weight.bin"));
    CHECK_FALSE(fs::exists(dir / "generator_source.fc.weight.bin"));
    const TrainState back = load_checkpoint(dir);
    CHECK(back.mode == RunMode::pretrain);
    CHECK(back.models.generator_target.parameters().equal_values(s.models.generator_target.parameters()));
}

TEST_CASE("architecture mismatch is reported")
{
    const auto dir = scratch("arch");
    save_checkpoint(adapted(2), dir);
    GeneratorConfig wrong = tiny_generator();
    wrong.channels_per_block = {8, 4, 4};
    try {
        (void)load_checkpoint(dir, wrong, tiny_discriminator());
        FAIL("expected a LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("architecture mismatch") != std::string::npos);
    }
    CHECK_NOTHROW(load_checkpoint(dir, tiny_generator(), tiny_discriminator()));
}

TEST_CASE("corrupt manifests name the failing field")
{
    const auto dir = scratch("corrupt");
    const TrainState s = adapted(2);

    save_checkpoint(s, dir);
    edit_manifest(dir, [](auto& j) { j.erase("rng_state"); });
    CHECK(load_error(dir).find("rng_state") != std::string::npos);

    save_checkpoint(s, dir);
    edit_manifest(dir, [](auto& j) { j["iteration"] = "seven"; });
    CHECK(load_error(dir).find("iteration") != std::string::npos);

    save_checkpoint(s, dir);
    edit_manifest(dir, [](auto& j) { j["anchors"]["values"] = nlohmann::json::array({1.0}); });
    CHECK(load_error(dir).find("anchors") != std::string::npos);

    save_checkpoint(s, dir);
    edit_manifest(dir, [](auto& j) { j["config"]["mask.ratio"] = "2"; });
    CHECK(load_error(dir).find("mask.ratio") != std::string::npos);

    save_checkpoint(s, dir);
    std::ofstream(dir / "manifest.json") << "{ not json";
    CHECK(load_error(dir).find("manifest.json") != std::string::npos);

    save_checkpoint(s, dir);
    fs::resize_file(dir / "generator_target.fc.weight.bin", 8);
    CHECK(load_error(dir).find("generator_target.fc.weight") != std::string::npos);
}
