#include "fsgan/cli.hpp"

#include "fsgan/checkpoint.hpp"
#include "fsgan/errors.hpp"
#include "fsgan/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fsgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
    return out;
}

std::uint64_t parse_count(const std::string& text, const std::string& what)
{
    try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad " + what + " '" + text + "' in data spec");
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw LoadError("failed writing " + path.string());
}

TrainHooks logging_hooks(const fs::path& out_dir)
{
    TrainHooks hooks;
    hooks.on_record = [](const TrainState& s, const LossRecord& r) {
        const auto every = s.config.log_every;
        if (every > 0 && (r.iteration % every == 0 || r.iteration + 1 == s.config.iterations))
            std::cerr << "iter " << r.iteration << "  adv_img " << r.adv_img << "  adv_patch " << r.adv_patch
                      << "  cdc_g " << r.cdc_g << "  cdc_d " << r.cdc_d << "  total " << r.total << "\n";
    };
    hooks.on_checkpoint = [out_dir](const TrainState& s) { save_checkpoint(s, out_dir); };
    return hooks;
}

void write_sample_grid(const TrainState& s, const fs::path& path, std::size_t columns)
{
    if (s.noise_bank.size() == 0) throw LoadError("checkpoint has no noise bank");
    write_grid(path, sampling_generator(s).forward(s.noise_bank).images.value(), columns);
}

struct EvalOptions {
    std::string shots;
    std::string real;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    bool n_set = false;
    bool seed_set = false;
};

json evaluate(const TrainState& s, const std::string& label, const EvalOptions& opt)
{
    const auto res = s.config.generator.output_resolution;
    const ImageDataset shots = load_dataset(opt.shots, res);
    const std::size_t n = opt.n_set ? opt.n : s.config.eval_n;
    const std::uint64_t seed = opt.seed_set ? opt.seed : s.config.eval_seed;
    const auto& g = sampling_generator(s);
    const Tensor fakes = generate_images(g, n, seed);
    const DiversityReport div = intra_diversity_of_images(fakes, shots.images);
    const Tensor reference = opt.real.empty() ? shots.images : load_dataset(opt.real, res).images;
    const FidReport fid = desk_fid(reference, fakes);
    auto record = json::parse(evaluation_json(label, div, fid, n, seed));
    record["shots"] = opt.shots;
    record["fid_reference"] = opt.real.empty() ? opt.shots : opt.real;
    return record;
}

void add_config_options(CLI::App* cmd, std::string& config, std::vector<std::string>& sets)
{
    cmd->add_option("--config", config, "Config file of key = value lines")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override one config key, key=value (repeatable)");
}

void add_eval_options(CLI::App* cmd, EvalOptions& e, bool shots_required)
{
    auto* shots = cmd->add_option("--shots", e.shots, "Few-shot training samples (directory or synth:target spec)");
    if (shots_required) shots->required();
    cmd->add_option("--real", e.real, "Reference images for desk_fid (defaults to the shots)");
    cmd->add_option("--n", e.n, "Number of generated images (default eval.n)")->check(CLI::PositiveNumber);
    cmd->add_option("--eval-seed", e.seed, "Noise seed for evaluation (default eval.seed)");
}

std::string sanitize(const std::string& v)
{
    std::string out;
    for (char c : v) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return out;
}

int run_pretrain(const std::string& data, const fs::path& out, const std::string& config,
                 const std::vector<std::string>& sets, bool resume)
{
    const TrainConfig cfg = resolve_config(config, sets);
    const ImageDataset source = load_dataset(data, cfg.generator.output_resolution);
    fs::create_directories(out);
    TrainState s = [&] {
        if (resume && fs::exists(out / "manifest.json")) {
            TrainState loaded = load_checkpoint(out, cfg.generator, cfg.discriminator);
            loaded.config.iterations = cfg.iterations;
            return loaded;
        }
        if (source.size() < kMinPretrainImages)
            throw ConfigError("pretraining needs at least " + std::to_string(kMinPretrainImages) +
                              " source images, got " + std::to_string(source.size()));
        return init_pretraining(cfg);
    }();
    train(s, source, logging_hooks(out));
    write_sample_grid(s, out / "grid.png", 8);
    std::cout << (out / "manifest.json").string() << "\n";
    return 0;
}

TrainState run_adaptation(const fs::path& source_dir, const std::string& target, const fs::path& out,
                          const TrainConfig& cfg, bool resume)
{
    fs::create_directories(out);
    if (resume && fs::exists(out / "manifest.json")) {
        TrainState s = load_checkpoint(out);
        s.config.iterations = cfg.iterations;
        const ImageDataset data = load_dataset(target, s.config.generator.output_resolution);
        train(s, data, logging_hooks(out));
        return s;
    }
    const TrainState source = load_checkpoint(source_dir);
    const ImageDataset data = load_dataset(target, source.config.generator.output_resolution);
    TrainState s = init_adaptation(source, data, cfg);
    train(s, data, logging_hooks(out));
    return s;
}

} // namespace

ImageDataset load_dataset(const std::string& spec, std::size_t resolution)
{
    if (spec.rfind("synth:", 0) != 0) return load_image_dir(spec, resolution);
    const auto parts = split(spec.substr(6), ':');
    if (parts.empty() || parts.size() > 3 || (parts[0] != "source" && parts[0] != "target"))
        throw ConfigError("data spec '" + spec + "' must be synth:source[:count[:seed]] or synth:target[:count[:seed]]");
    SynthDomainSpec s;
    s.resolution = resolution;
    const bool target = parts[0] == "target";
    s.count = target ? 10 : 5000;
    s.seed = target ? 100 : 0;
    if (target) s.target_shift = TargetShift{};
    if (parts.size() > 1) s.count = parse_count(parts[1], "count");
    if (parts.size() > 2) s.seed = parse_count(parts[2], "seed");
    return synth_domain(s);
}

TrainConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides, TrainConfig base)
{
    TrainConfig cfg = config_path.empty() ? std::move(base) : load_config(config_path, std::move(base));
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        apply_setting(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

AblationAxis parse_axis(const std::string& name)
{
    if (name == "mask_ratio") return AblationAxis::mask_ratio;
    if (name == "mask_layer") return AblationAxis::mask_layer;
    if (name == "lambda") return AblationAxis::lambda;
    throw ConfigError("unknown ablation axis '" + name + "' (mask_ratio, mask_layer, lambda)");
}

std::string to_string(AblationAxis axis)
{
    switch (axis) {
    case AblationAxis::mask_ratio: return "mask_ratio";
    case AblationAxis::mask_layer: return "mask_layer";
    case AblationAxis::lambda: return "lambda";
    }
    return {};
}

std::vector<std::string> default_axis_values(AblationAxis axis, const TrainConfig& cfg)
{
    switch (axis) {
    case AblationAxis::mask_ratio: return {"0", "1/2", "5/8", "3/4", "7/8"};
    case AblationAxis::lambda: return {"0", "1000", "2500", "5000", "7500"};
    case AblationAxis::mask_layer: {
        std::vector<std::string> out;
        for (auto r : cfg.discriminator.block_resolutions()) out.push_back(std::to_string(r));
        return out;
    }
    }
    return {};
}

void apply_axis_value(TrainConfig& cfg, AblationAxis axis, const std::string& value)
{
    switch (axis) {
    case AblationAxis::mask_ratio: apply_setting(cfg, "mask.ratio", value); break;
    case AblationAxis::mask_layer: apply_setting(cfg, "mask.layer", value); break;
    case AblationAxis::lambda: apply_setting(cfg, "cdc.lambda", value); break;
    }
    cfg.validate();
}

std::string evaluation_json(const std::string& checkpoint, const DiversityReport& d, const FidReport& f, std::size_t n,
                            std::uint64_t seed)
{
    json j;
    j["checkpoint"] = checkpoint;
    j["n_generated"] = n;
    j["seed"] = seed;
    j["intra_diversity"] = {{"mean", d.intra_diversity},
                            {"std", d.std_over_clusters},
                            {"k", d.k},
                            {"per_cluster", d.per_cluster},
                            {"cluster_sizes", d.cluster_sizes},
                            {"undersized", d.undersized}};
    j["desk_fid"] = {{"value", f.value},
                     {"regularized", f.regularized},
                     {"epsilon", f.epsilon},
                     {"n_real", f.n_real},
                     {"n_fake", f.n_fake},
                     {"dimension", f.dimension}};
    return j.dump(2);
}

int run_cli(int argc, const char* const* argv)
{
    CLI::App app{"Few-shot GAN adaptation with masked discrimination and cross-domain consistency"};
    app.require_subcommand(1);

    std::string config, data, target, source, out, checkpoint, axis, values;
    std::vector<std::string> sets;
    bool resume = false;
    std::size_t columns = 8;
    EvalOptions eval_opts;

    auto* pre = app.add_subcommand("pretrain", "Plain GAN training on a source domain");
    pre->add_option("--data", data, "Source images (directory or synth:source spec)")->required();
    pre->add_option("--out", out, "Checkpoint directory")->required();
    pre->add_flag("--resume", resume, "Continue from the checkpoint in --out");
    add_config_options(pre, config, sets);

    auto* ad = app.add_subcommand("adapt", "Few-shot adaptation of a pretrained checkpoint");
    ad->add_option("--source", source, "Pretrained checkpoint directory")->required();
    ad->add_option("--target", target, "Few-shot target images (directory or synth:target spec)")->required();
    ad->add_option("--out", out, "Adapted checkpoint directory")->required();
    ad->add_flag("--resume", resume, "Continue from the checkpoint in --out");
    add_config_options(ad, config, sets);

    auto* ev = app.add_subcommand("eval", "Diversity and desk_fid of a checkpoint");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    ev->add_option("--out", out, "Metric record path (default <checkpoint>/metrics.json)");
    add_eval_options(ev, eval_opts, true);

    auto* gr = app.add_subcommand("grid", "Render the fixed-noise sample grid of a checkpoint");
    gr->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    gr->add_option("--out", out, "PNG path")->required();
    gr->add_option("--columns", columns, "Images per row")->check(CLI::PositiveNumber);

    auto* ab = app.add_subcommand("ablate", "Sweep one axis of adaptation runs and tabulate their metrics");
    ab->add_option("--axis", axis, "mask_ratio, mask_layer or lambda")->required();
    ab->add_option("--values", values, "Comma-separated values (default: the standard sweep)");
    ab->add_option("--source", source, "Pretrained checkpoint directory")->required();
    ab->add_option("--target", target, "Few-shot target images")->required();
    ab->add_option("--out", out, "Directory for runs and the table")->required();
    add_config_options(ab, config, sets);
    add_eval_options(ab, eval_opts, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    eval_opts.n_set = ev->count("--n") + ab->count("--n") > 0;
    eval_opts.seed_set = ev->count("--eval-seed") + ab->count("--eval-seed") > 0;

    try {
        if (*pre) return run_pretrain(data, out, config, sets, resume);

        if (*ad) {
            const TrainState s = run_adaptation(source, target, out, resolve_config(config, sets), resume);
            write_sample_grid(s, fs::path(out) / "grid.png", 8);
            std::cout << (fs::path(out) / "manifest.json").string() << "\n";
            return 0;
        }

        if (*ev) {
            const TrainState s = load_checkpoint(checkpoint);
            const json record = evaluate(s, checkpoint, eval_opts);
            const fs::path path = out.empty() ? fs::path(checkpoint) / "metrics.json" : fs::path(out);
            write_text(path, record.dump(2) + "\n");
            std::cout << record.dump(2) << "\n";
            return 0;
        }

        if (*gr) {
            write_sample_grid(load_checkpoint(checkpoint), out, columns);
            return 0;
        }

        if (*ab) {
            const AblationAxis ax = parse_axis(axis);
            const TrainConfig base = resolve_config(config, sets);
            const auto list = values.empty() ? default_axis_values(ax, base) : split(values, ',');
            if (list.empty()) throw ConfigError("--values is empty");
            if (eval_opts.shots.empty()) eval_opts.shots = target;
            const fs::path root(out);
            fs::create_directories(root);
            std::ostringstream table;
            table << "axis\tvalue\tintra_diversity\tdiversity_std\tdesk_fid\tfinal_total\trun_dir\tmanifest\n";
            for (const auto& v : list) {
                TrainConfig cfg = base;
                apply_axis_value(cfg, ax, v);
                const fs::path run = root / (to_string(ax) + "_" + sanitize(v));
                std::cerr << "== " << to_string(ax) << " = " << v << " -> " << run.string() << "\n";
                const TrainState s = run_adaptation(source, target, run, cfg, false);
                const json record = evaluate(s, run.string(), eval_opts);
                write_text(run / "metrics.json", record.dump(2) + "\n");
                table << to_string(ax) << '\t' << v << '\t' << record["intra_diversity"]["mean"].get<double>() << '\t'
                      << record["intra_diversity"]["std"].get<double>() << '\t'
                      << record["desk_fid"]["value"].get<double>() << '\t'
                      << (s.records.empty() ? 0.0 : s.records.back().total) << '\t' << run.string() << '\t'
                      << (run / "manifest.json").string() << '\n';
            }
            const fs::path table_path = root / ("ablation_" + to_string(ax) + ".tsv");
            write_text(table_path, table.str());
            std::cout << table.str();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run_cli(const std::vector<std::string>& args)
{
    std::vector<const char*> argv;
    argv.push_back("fsgan");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace fsgan
