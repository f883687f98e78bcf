#include "fsgan/config.hpp"

#include "fsgan/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace fsgan {

namespace {

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v)
{
    double out = 0.0;
    // Allow simple fractions such as 3/4.
    if (const auto slash = v.find('/'); slash != std::string::npos)
        return to_double(key, trim(v.substr(0, slash))) / to_double(key, trim(v.substr(slash + 1)));
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_uint_list(const std::string& key, const std::string& v)
{
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(to_uint(key, item));
    return out;
}

std::string fmt_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <class Range>
std::string fmt_list(const Range& r)
{
    std::string out;
    for (auto v : r) {
        if (!out.empty()) out += ",";
        out += std::to_string(v);
    }
    return out;
}

} // namespace

std::string to_string(AdvForm form) { return form == AdvForm::score_diff ? "score_diff" : "softplus"; }

std::string to_string(MaskTarget target) { return target == MaskTarget::features ? "features" : "pixels"; }

void TrainConfig::validate() const
{
    if (!(lambda_g >= 0.0)) throw ConfigError("cdc.lambda_g must be >= 0");
    if (!(lambda_d >= 0.0)) throw ConfigError("cdc.lambda_d must be >= 0");
    if (!(mask.ratio >= 0.0 && mask.ratio <= 1.0)) throw ConfigError("mask.ratio must lie in [0, 1]");
    if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
    if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (similarity distributions need K >= 1)");
    if (zsub.k < 1) throw ConfigError("zsub.k must be >= 1");
    if (!(zsub.p >= 0.0 && zsub.p <= 1.0)) throw ConfigError("zsub.p must lie in [0, 1]");
    if (!(zsub.sigma >= 0.0)) throw ConfigError("zsub.sigma must be >= 0");
    if (zsub.enabled && sub_sample_count(batch_size, zsub.p) == 0)
        throw ConfigError("zsub.p = 0 leaves the image-level term without samples; set zsub.enabled = false instead");
    if (!(optimizer.lr > 0.0)) throw ConfigError("optim.lr must be positive");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
        throw ConfigError("optim.beta1/beta2 must lie in [0, 1)");
    generator.validate();
    discriminator.validate();
    if (generator.output_resolution != discriminator.input_resolution)
        throw ConfigError("generator output and discriminator input resolutions differ");
    if (mask.target == MaskTarget::features) {
        const auto res = discriminator.block_resolutions();
        if (std::ranges::find(res, mask.layer) == res.end())
            throw ConfigError("mask.layer " + std::to_string(mask.layer) + " is not a discriminator block resolution");
    }
    FeatureTapSet{resolved_generator_taps(), resolved_discriminator_taps()}.validate(generator, discriminator);
    if (patch.enabled) (void)select_patch_taps(discriminator, patch);
    if (eval_n < 1) throw ConfigError("eval.n must be >= 1");
}

std::vector<std::size_t> TrainConfig::resolved_generator_taps() const
{
    return generator_taps.empty() ? generator.block_resolutions() : generator_taps;
}

std::vector<std::size_t> TrainConfig::resolved_discriminator_taps() const
{
    if (!discriminator_taps.empty()) return discriminator_taps;
    // Deep to shallow, matching the order blocks are listed in.
    return {discriminator.tap_resolutions.rbegin(), discriminator.tap_resolutions.rend()};
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& raw)
{
    const std::string v = trim(raw);
    if (key == "cdc.lambda") cfg.lambda_g = cfg.lambda_d = to_double(key, v);
    else if (key == "cdc.lambda_g") cfg.lambda_g = to_double(key, v);
    else if (key == "cdc.lambda_d") cfg.lambda_d = to_double(key, v);
    else if (key == "cdc.detach_d_in_g") cfg.detach_d_in_g = to_bool(key, v);
    else if (key == "cdc.generator_taps") cfg.generator_taps = to_uint_list(key, v);
    else if (key == "cdc.discriminator_taps") cfg.discriminator_taps = to_uint_list(key, v);
    else if (key == "mask.layer") cfg.mask.layer = to_uint(key, v);
    else if (key == "mask.ratio") cfg.mask.ratio = to_double(key, v);
    else if (key == "mask.per_sample") cfg.mask.per_sample = to_bool(key, v);
    else if (key == "mask.target") {
        if (v == "features") cfg.mask.target = MaskTarget::features;
        else if (v == "pixels") cfg.mask.target = MaskTarget::pixels;
        else throw ConfigError("mask.target must be features or pixels, got '" + v + "'");
    } else if (key == "adv.form") {
        if (v == "score_diff") cfg.adv_form = AdvForm::score_diff;
        else if (v == "softplus") cfg.adv_form = AdvForm::softplus;
        else throw ConfigError("adv.form must be score_diff or softplus, got '" + v + "'");
    } else if (key == "adv.patch.enabled") cfg.patch.enabled = to_bool(key, v);
    else if (key == "adv.patch.band") {
        if (v == "auto") cfg.patch.band.reset();
        else {
            const auto parts = split_list(v);
            if (parts.size() != 2) throw ConfigError("adv.patch.band must be 'auto' or 'lo,hi'");
            cfg.patch.band = std::pair{to_double(key, parts[0]), to_double(key, parts[1])};
        }
    } else if (key == "zsub.enabled") cfg.zsub.enabled = to_bool(key, v);
    else if (key == "zsub.k") cfg.zsub.k = to_uint(key, v);
    else if (key == "zsub.p") cfg.zsub.p = to_double(key, v);
    else if (key == "zsub.sigma") cfg.zsub.sigma = to_double(key, v);
    else if (key == "optim.lr") cfg.optimizer.lr = to_double(key, v);
    else if (key == "optim.beta1") cfg.optimizer.beta1 = to_double(key, v);
    else if (key == "optim.beta2") cfg.optimizer.beta2 = to_double(key, v);
    else if (key == "train.iterations") cfg.iterations = to_uint(key, v);
    else if (key == "train.batch_size") cfg.batch_size = to_uint(key, v);
    else if (key == "train.seed") cfg.seed = to_uint(key, v);
    else if (key == "train.log_every") cfg.log_every = to_uint(key, v);
    else if (key == "train.checkpoint_every") cfg.checkpoint_every = to_uint(key, v);
    else if (key == "model.latent_dim") cfg.generator.latent_dim = to_uint(key, v);
    else if (key == "model.resolution") cfg.generator.output_resolution = cfg.discriminator.input_resolution = to_uint(key, v);
    else if (key == "model.g_channels") cfg.generator.channels_per_block = to_uint_list(key, v);
    else if (key == "model.d_channels") cfg.discriminator.channels_per_block = to_uint_list(key, v);
    else if (key == "model.d_taps") {
        const auto taps = to_uint_list(key, v);
        cfg.discriminator.tap_resolutions = {taps.begin(), taps.end()};
    } else if (key == "model.g_seed") cfg.generator.seed = to_uint(key, v);
    else if (key == "model.d_seed") cfg.discriminator.seed = to_uint(key, v);
    else if (key == "eval.n") cfg.eval_n = to_uint(key, v);
    else if (key == "eval.seed") cfg.eval_seed = to_uint(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base)
{
    std::istringstream in(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base)
{
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string to_config_text(const TrainConfig& c)
{
    std::ostringstream o;
    auto kv = [&o](const char* k, const std::string& v) { o << k << " = " << v << "\n"; };
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    kv("cdc.lambda_g", fmt_double(c.lambda_g));
    kv("cdc.lambda_d", fmt_double(c.lambda_d));
    kv("cdc.detach_d_in_g", b(c.detach_d_in_g));
    kv("cdc.generator_taps", fmt_list(c.generator_taps));
    kv("cdc.discriminator_taps", fmt_list(c.discriminator_taps));
    kv("mask.layer", std::to_string(c.mask.layer));
    kv("mask.ratio", fmt_double(c.mask.ratio));
    kv("mask.per_sample", b(c.mask.per_sample));
    kv("mask.target", to_string(c.mask.target));
    kv("adv.form", to_string(c.adv_form));
    kv("adv.patch.enabled", b(c.patch.enabled));
    kv("adv.patch.band", c.patch.band ? fmt_double(c.patch.band->first) + "," + fmt_double(c.patch.band->second) : "auto");
    kv("zsub.enabled", b(c.zsub.enabled));
    kv("zsub.k", std::to_string(c.zsub.k));
    kv("zsub.p", fmt_double(c.zsub.p));
    kv("zsub.sigma", fmt_double(c.zsub.sigma));
    kv("optim.lr", fmt_double(c.optimizer.lr));
    kv("optim.beta1", fmt_double(c.optimizer.beta1));
    kv("optim.beta2", fmt_double(c.optimizer.beta2));
    kv("train.iterations", std::to_string(c.iterations));
    kv("train.batch_size", std::to_string(c.batch_size));
    kv("train.seed", std::to_string(c.seed));
    kv("train.log_every", std::to_string(c.log_every));
    kv("train.checkpoint_every", std::to_string(c.checkpoint_every));
    kv("model.latent_dim", std::to_string(c.generator.latent_dim));
    kv("model.resolution", std::to_string(c.generator.output_resolution));
    kv("model.g_channels", fmt_list(c.generator.channels_per_block));
    kv("model.d_channels", fmt_list(c.discriminator.channels_per_block));
    kv("model.d_taps", fmt_list(c.discriminator.tap_resolutions));
    kv("model.g_seed", std::to_string(c.generator.seed));
    kv("model.d_seed", std::to_string(c.discriminator.seed));
    kv("eval.n", std::to_string(c.eval_n));
    kv("eval.seed", std::to_string(c.eval_seed));
    return o.str();
}

} // namespace fsgan
