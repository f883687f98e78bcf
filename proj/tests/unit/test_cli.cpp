#include "fsgan/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>

using namespace fsgan;
namespace fs = std::filesystem;

namespace {

fs::path root()
{
    const char* env = std::getenv("FSGAN_TEST_TMP");
    static const fs::path dir = [env] {
        fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "fsgan_cli";
        fs::remove_all(p);
        fs::create_directories(p);
        std::ofstream(p / "tiny.cfg") << "model.latent_dim = 8\n"
                                         "model.g_channels = 4,4,4\n"
                                         "model.d_channels = 4,4,4\n"
                                         "adv.form = softplus\n"
                                         "zsub.k = 3\n"
                                         "train.iterations = 3\n"
                                         "train.log_every = 0\n"
                                         "eval.n = 12\n";
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& pretrained()
{
    static const fs::path dir = [] {
        const auto out = root() / "pre";
        REQUIRE(run_cli({"pretrain", "--data", "synth:source:1000", "--out", out.string(), "--config",
                         (root() / "tiny.cfg").string()}) == 0);
        return out;
    }();
    return dir;
}

int adapt_to(const fs::path& out, std::vector<std::string> extra = {})
{
    std::vector<std::string> args{"adapt",    "--source", pretrained().string(), "--target", "synth:target:3",
                                  "--out",    out.string(), "--config",          (root() / "tiny.cfg").string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
}

} // namespace

TEST_CASE("usage errors exit nonzero")
{
    CHECK(run_cli({}) != 0);
    CHECK(run_cli({"train"}) != 0);
    CHECK(run_cli({"eval", "--bogus"}) != 0);
    CHECK(run_cli({"pretrain", "--data", "synth:source:10", "--out", (root() / "small").string()}) != 0);
    CHECK(run_cli({"ablate", "--axis", "depth", "--source", "x", "--target", "y", "--out", "z"}) != 0);
}

TEST_CASE("pretrain writes a checkpoint and a grid")
{
    const auto& dir = pretrained();
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "losses.jsonl"));
    CHECK(fs::exists(dir / "grid.png"));
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["mode"] == "pretrain");
    CHECK(m["iteration"] == 3);
}

TEST_CASE("adapt, eval and grid")
{
    const auto out = root() / "run1";
    REQUIRE(adapt_to(out) == 0);
    const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m["mode"] == "adapt");
    CHECK(m["anchors"]["k"] == 3);

    REQUIRE(run_cli({"eval", "--checkpoint", out.string(), "--shots", "synth:target:3", "--n", "12"}) == 0);
    const auto e = nlohmann::json::parse(slurp(out / "metrics.json"));
    CHECK(e["n_generated"] == 12);
    CHECK(e["intra_diversity"]["per_cluster"].size() == 3);
    CHECK(e["desk_fid"]["value"].get<double>() >= 0.0);

    REQUIRE(run_cli({"grid", "--checkpoint", out.string(), "--out", (root() / "grid.png").string()}) == 0);
    CHECK(fs::file_size(root() / "grid.png") > 0);
}

TEST_CASE("identical arguments give identical artifacts")
{
    REQUIRE(adapt_to(root() / "det_a") == 0);
    REQUIRE(adapt_to(root() / "det_b") == 0);
    CHECK(slurp(root() / "det_a" / "losses.jsonl") == slurp(root() / "det_b" / "losses.jsonl"));
    CHECK(slurp(root() / "det_a" / "generator_target.fc.weight.bin") ==
          slurp(root() / "det_b" / "generator_target.fc.weight.bin"));
}

TEST_CASE("resume continues to the requested iteration count")
{
    const auto out = root() / "resumed";
    REQUIRE(adapt_to(out, {"--set", "train.iterations=2"}) == 0);
    REQUIRE(adapt_to(out, {"--set", "train.iterations=4", "--resume"}) == 0);
    REQUIRE(adapt_to(root() / "straight", {"--set", "train.iterations=4"}) == 0);
    const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m["iteration"] == 4);
    CHECK(slurp(out / "manifest.json") == slurp(root() / "straight" / "manifest.json"));
    CHECK(slurp(out / "losses.jsonl") == slurp(root() / "straight" / "losses.jsonl"));
    CHECK(slurp(out / "generator_target.block32.conv.weight.bin") ==
          slurp(root() / "straight" / "generator_target.block32.conv.weight.bin"));
}

TEST_CASE("shot count mismatch is a configuration error")
{
    CHECK(run_cli({"adapt", "--source", pretrained().string(), "--target", "synth:target:5", "--out",
                   (root() / "bad").string(), "--config", (root() / "tiny.cfg").string()}) != 0);
}

TEST_CASE("ablate produces one traceable row per value")
{
    const auto out = root() / "ablate";
    REQUIRE(run_cli({"ablate", "--axis", "mask_ratio", "--values", "0,1/2,3/4", "--source", pretrained().string(),
                     "--target", "synth:target:3", "--out", out.string(), "--config", (root() / "tiny.cfg").string(),
                     "--n", "6"}) == 0);
    std::ifstream table(out / "ablation_mask_ratio.tsv");
    std::string line;
    std::getline(table, line);
    CHECK(line.rfind("axis\tvalue", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(table, line)) {
        ++rows;
        const auto manifest = line.substr(line.rfind('\t') + 1);
        CHECK(fs::exists(manifest));
    }
    CHECK(rows == 3);
}
