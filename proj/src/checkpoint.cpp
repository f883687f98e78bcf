#include "fsgan/checkpoint.hpp"

#include "fsgan/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fsgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "float32 files are written in host order");

constexpr const char* kManifest = "manifest.json";
constexpr const char* kLossLog = "losses.jsonl";
constexpr const char* kNoiseBank = "noise_bank.bin";

std::string mode_name(RunMode m) { return m == RunMode::pretrain ? "pretrain" : "adapt"; }

const json& field(const json& j, const std::string& key, const std::string& where)
{
    if (!j.is_object() || !j.contains(key)) throw LoadError(where + ": missing field '" + key + "'");
    return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& key, const std::string& where)
{
    const json& v = field(j, key, where);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw LoadError(where + ": field '" + key + "' has the wrong type");
    }
}

json generator_json(const GeneratorConfig& c)
{
    return {{"latent_dim", c.latent_dim},
            {"base_resolution", c.base_resolution},
            {"output_resolution", c.output_resolution},
            {"channels", c.channels_per_block},
            {"seed", c.seed}};
}

json discriminator_json(const DiscriminatorConfig& c)
{
    return {{"input_resolution", c.input_resolution},
            {"channels", c.channels_per_block},
            {"taps", c.tap_resolutions},
            {"seed", c.seed}};
}

GeneratorConfig generator_from_json(const json& j)
{
    const std::string w = "manifest.json generator";
    GeneratorConfig c;
    c.latent_dim = get_as<std::size_t>(j, "latent_dim", w);
    c.base_resolution = get_as<std::size_t>(j, "base_resolution", w);
    c.output_resolution = get_as<std::size_t>(j, "output_resolution", w);
    c.channels_per_block = get_as<std::vector<std::size_t>>(j, "channels", w);
    c.seed = get_as<std::uint64_t>(j, "seed", w);
    return c;
}

DiscriminatorConfig discriminator_from_json(const json& j)
{
    const std::string w = "manifest.json discriminator";
    DiscriminatorConfig c;
    c.input_resolution = get_as<std::size_t>(j, "input_resolution", w);
    c.channels_per_block = get_as<std::vector<std::size_t>>(j, "channels", w);
    c.tap_resolutions = get_as<std::set<std::size_t>>(j, "taps", w);
    c.seed = get_as<std::uint64_t>(j, "seed", w);
    return c;
}

bool same(const GeneratorConfig& a, const GeneratorConfig& b)
{
    return a.latent_dim == b.latent_dim && a.base_resolution == b.base_resolution &&
           a.output_resolution == b.output_resolution && a.channels_per_block == b.channels_per_block;
}

bool same(const DiscriminatorConfig& a, const DiscriminatorConfig& b)
{
    return a.input_resolution == b.input_resolution && a.channels_per_block == b.channels_per_block &&
           a.tap_resolutions == b.tap_resolutions;
}

json config_json(const TrainConfig& c)
{
    json out = json::object();
    std::istringstream in(to_config_text(c));
    for (std::string line; std::getline(in, line);) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return out;
}

TrainConfig config_from_json(const json& j)
{
    if (!j.is_object()) throw LoadError("manifest.json: field 'config' must be an object");
    TrainConfig c;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw LoadError("manifest.json config: field '" + k + "' must be a string");
        try {
            apply_setting(c, k, v.get<std::string>());
        } catch (const ConfigError& e) {
            throw LoadError(std::string("manifest.json config: ") + e.what());
        }
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw LoadError(std::string("manifest.json config: ") + e.what());
    }
    return c;
}

struct Entry {
    std::string name;
    std::string file;
    Shape shape;
};


// Named models saved for a run mode, in manifest order.
std::vector<std::pair<std::string, const ParameterSet*>> saved_models(const TrainState& s)
{
    const auto& m = s.models;
    std::vector<std::pair<std::string, const ParameterSet*>> out;
    if (s.mode == RunMode::adapt) {
        out.emplace_back("generator_source", &m.generator_source.parameters());
        out.emplace_back("discriminator_source", &m.discriminator_source.parameters());
    }
    out.emplace_back("generator_target", &m.generator_target.parameters());
    out.emplace_back("discriminator_target", &m.discriminator_target.parameters());
    return out;
}

} // namespace

void write_float32_file(const fs::path& path, const Tensor& t)
{
    std::vector<float> buf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw LoadError("failed writing " + path.string());
}

Tensor read_float32_file(const fs::path& path, const Shape& shape)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("missing array file " + path.string());
    const std::size_t n = numel(shape);
    std::error_code ec;
    const auto bytes = fs::file_size(path, ec);
    if (ec || bytes != n * sizeof(float))
        throw LoadError(path.filename().string() + ": expected " + std::to_string(n * sizeof(float)) + " bytes for shape " +
                        shape_string(shape) + ", found " + std::to_string(ec ? 0 : bytes));
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw LoadError("failed reading " + path.string());
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = buf[i];
    return t;
}

std::string loss_record_json(const LossRecord& r)
{
    const json j = {{"iteration", r.iteration}, {"adv_img", r.adv_img},     {"adv_patch", r.adv_patch},
                    {"cdc_g", r.cdc_g},         {"cdc_d", r.cdc_d},         {"total", r.total},
                    {"g_adv_img", r.g_adv_img}, {"g_adv_patch", r.g_adv_patch}, {"g_cdc_g", r.g_cdc_g},
                    {"g_cdc_d", r.g_cdc_d},     {"g_total", r.g_total}};
    return j.dump();
}

std::vector<LossRecord> read_loss_log(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw LoadError("missing loss log " + path.string());
    std::vector<LossRecord> out;
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (line.empty()) continue;
        const std::string w = path.filename().string() + " line " + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            throw LoadError(w + ": not valid JSON");
        }
        LossRecord r;
        r.iteration = get_as<std::size_t>(j, "iteration", w);
        r.adv_img = get_as<double>(j, "adv_img", w);
        r.adv_patch = get_as<double>(j, "adv_patch", w);
        r.cdc_g = get_as<double>(j, "cdc_g", w);
        r.cdc_d = get_as<double>(j, "cdc_d", w);
        r.total = get_as<double>(j, "total", w);
        r.g_adv_img = get_as<double>(j, "g_adv_img", w);
        r.g_adv_patch = get_as<double>(j, "g_adv_patch", w);
        r.g_cdc_g = get_as<double>(j, "g_cdc_g", w);
        r.g_cdc_d = get_as<double>(j, "g_cdc_d", w);
        r.g_total = get_as<double>(j, "g_total", w);
        out.push_back(r);
    }
    return out;
}

void save_checkpoint(const TrainState& s, const fs::path& dir)
{
    fs::create_directories(dir);
    json params = json::array();
    auto store = [&](const std::string& name, const Tensor& t) {
        const std::string file = name + ".bin";
        write_float32_file(dir / file, t);
        params.push_back({{"name", name}, {"file", file}, {"shape", t.shape}});
    };
    for (const auto& [model, set] : saved_models(s))
        for (const auto& p : set->items()) store(model + "." + p.name, p.value.value());

    auto store_moments = [&](const std::string& model, const ParameterSet& set, const Adam& opt) {
        const auto items = set.items();
        for (std::size_t k = 0; k < items.size(); ++k) {
            store("adam." + model + ".m." + items[k].name, opt.first_moments()[k]);
            store("adam." + model + ".v." + items[k].name, opt.second_moments()[k]);
        }
    };
    store_moments("generator_target", s.models.generator_target.parameters(), s.generator_optimizer);
    store_moments("discriminator_target", s.models.discriminator_target.parameters(), s.discriminator_optimizer);

    json manifest;
    manifest["format"] = kCheckpointFormat;
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["code_version"] = FSGAN_VERSION;
    manifest["mode"] = mode_name(s.mode);
    manifest["iteration"] = s.iteration;
    manifest["config"] = config_json(s.config);
    manifest["generator"] = generator_json(s.config.generator);
    manifest["discriminator"] = discriminator_json(s.config.discriminator);
    manifest["anchors"] = {{"k", s.anchors.k()},
                           {"latent_dim", s.anchors.latent_dim()},
                           {"sigma", s.anchors.sigma},
                           {"values", s.anchors.anchors.data}};
    manifest["rng_state"] = rng_state(s.rng);
    manifest["optimizer"] = {{"generator_steps", s.generator_optimizer.steps()},
                             {"discriminator_steps", s.discriminator_optimizer.steps()}};
    manifest["patch_taps"] = s.patch_taps;
    if (s.noise_bank.size() > 0) {
        write_float32_file(dir / kNoiseBank, s.noise_bank);
        manifest["noise_bank"] = {{"file", kNoiseBank}, {"shape", s.noise_bank.shape}};
    }
    manifest["parameters"] = params;
    manifest["loss_log"] = kLossLog;

    {
        std::ofstream log(dir / kLossLog, std::ios::trunc);
        for (const auto& r : s.records) log << loss_record_json(r) << "\n";
        if (!log) throw LoadError("failed writing " + (dir / kLossLog).string());
    }
    std::ofstream out(dir / kManifest, std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) throw LoadError("failed writing " + (dir / kManifest).string());
}

TrainState load_checkpoint(const fs::path& dir)
{
    const fs::path mpath = dir / kManifest;
    std::ifstream in(mpath);
    if (!in) throw LoadError("no " + std::string(kManifest) + " in " + dir.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw LoadError(std::string(kManifest) + ": not valid JSON (" + e.what() + ")");
    }
    const std::string w = kManifest;
    if (get_as<std::string>(m, "format", w) != kCheckpointFormat)
        throw LoadError(w + ": field 'format' is not '" + std::string(kCheckpointFormat) + "'");
    if (get_as<int>(m, "format_version", w) != kCheckpointFormatVersion)
        throw LoadError(w + ": unsupported field 'format_version' " + field(m, "format_version", w).dump());

    const auto mode_text = get_as<std::string>(m, "mode", w);
    if (mode_text != "pretrain" && mode_text != "adapt") throw LoadError(w + ": field 'mode' must be pretrain or adapt");
    const RunMode mode = mode_text == "pretrain" ? RunMode::pretrain : RunMode::adapt;

    TrainConfig cfg = config_from_json(field(m, "config", w));
    const auto gcfg = generator_from_json(field(m, "generator", w));
    const auto dcfg = discriminator_from_json(field(m, "discriminator", w));
    if (!same(gcfg, cfg.generator)) throw LoadError(w + ": field 'generator' disagrees with config model.* keys");
    if (!same(dcfg, cfg.discriminator)) throw LoadError(w + ": field 'discriminator' disagrees with config model.* keys");

    std::map<std::string, Entry> table;
    const json& plist = field(m, "parameters", w);
    if (!plist.is_array()) throw LoadError(w + ": field 'parameters' must be an array");
    for (const auto& p : plist) {
        Entry e{get_as<std::string>(p, "name", w + " parameters[]"), get_as<std::string>(p, "file", w + " parameters[]"),
                get_as<Shape>(p, "shape", w + " parameters[]")};
        table.emplace(e.name, e);
    }
    auto fetch = [&](const std::string& name, const Shape& expected) {
        const auto it = table.find(name);
        if (it == table.end()) throw LoadError(w + ": field 'parameters' has no entry '" + name + "'");
        if (it->second.shape != expected)
            throw LoadError(w + ": parameter '" + name + "' has shape " + shape_string(it->second.shape) +
                            ", the model expects " + shape_string(expected));
        return read_float32_file(dir / it->second.file, expected);
    };

    Generator g(cfg.generator);
    Discriminator d(cfg.discriminator);
    auto fill = [&](const std::string& model, ParameterSet& set) {
        for (auto& p : set.items()) p.value.mutable_value() = fetch(model + "." + p.name, p.value.shape());
    };
    TrainState s{cfg, mode, ModelPair::from_source(g, d), {}, {}, {}, Rng(0), 0, {}, {}, {}};
    if (mode == RunMode::adapt) {
        fill("generator_source", g.parameters());
        fill("discriminator_source", d.parameters());
        s.models = ModelPair::from_source(g, d);
    }
    fill("generator_target", s.models.generator_target.parameters());
    fill("discriminator_target", s.models.discriminator_target.parameters());
    if (mode == RunMode::pretrain)
        s.models = ModelPair::from_source(s.models.generator_target, s.models.discriminator_target);

    s.generator_optimizer = Adam(s.models.generator_target.parameters(), cfg.optimizer);
    s.discriminator_optimizer = Adam(s.models.discriminator_target.parameters(), cfg.optimizer);
    auto fill_moments = [&](const std::string& model, const ParameterSet& set, Adam& opt) {
        const auto items = set.items();
        for (std::size_t k = 0; k < items.size(); ++k) {
            opt.first_moments()[k] = fetch("adam." + model + ".m." + items[k].name, items[k].value.shape());
            opt.second_moments()[k] = fetch("adam." + model + ".v." + items[k].name, items[k].value.shape());
        }
    };
    fill_moments("generator_target", s.models.generator_target.parameters(), s.generator_optimizer);
    fill_moments("discriminator_target", s.models.discriminator_target.parameters(), s.discriminator_optimizer);
    const json& opt = field(m, "optimizer", w);
    s.generator_optimizer.set_steps(get_as<std::uint64_t>(opt, "generator_steps", w + " optimizer"));
    s.discriminator_optimizer.set_steps(get_as<std::uint64_t>(opt, "discriminator_steps", w + " optimizer"));

    const json& a = field(m, "anchors", w);
    const auto k = get_as<std::size_t>(a, "k", w + " anchors");
    const auto dim = get_as<std::size_t>(a, "latent_dim", w + " anchors");
    const auto values = get_as<std::vector<double>>(a, "values", w + " anchors");
    if (values.size() != k * dim) throw LoadError(w + ": field 'anchors.values' has the wrong length");
    s.anchors.sigma = get_as<double>(a, "sigma", w + " anchors");
    if (k > 0) {
        if (dim != cfg.generator.latent_dim) throw LoadError(w + ": field 'anchors.latent_dim' disagrees with the model");
        s.anchors.anchors = Tensor({k, dim}, values);
    }

    try {
        s.rng = rng_from_state(get_as<std::string>(m, "rng_state", w));
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception&) {
        throw LoadError(w + ": field 'rng_state' is not a valid generator state");
    }
    s.iteration = get_as<std::size_t>(m, "iteration", w);
    s.patch_taps = get_as<std::vector<std::size_t>>(m, "patch_taps", w);
    if (m.contains("noise_bank")) {
        const json& nb = m.at("noise_bank");
        s.noise_bank = read_float32_file(dir / get_as<std::string>(nb, "file", w + " noise_bank"),
                                         get_as<Shape>(nb, "shape", w + " noise_bank"));
    }
    s.records = read_loss_log(dir / get_as<std::string>(m, "loss_log", w));
    if (s.records.size() != s.iteration)
        throw LoadError(w + ": field 'iteration' is " + std::to_string(s.iteration) + " but the loss log has " +
                        std::to_string(s.records.size()) + " records");
    return s;
}

TrainState load_checkpoint(const fs::path& dir, const GeneratorConfig& expected_g, const DiscriminatorConfig& expected_d)
{
    TrainState s = load_checkpoint(dir);
    if (!same(s.config.generator, expected_g))
        throw LoadError("architecture mismatch: checkpoint generator is latent " +
                        std::to_string(s.config.generator.latent_dim) + ", channels " +
                        shape_string(s.config.generator.channels_per_block) + "; expected latent " +
                        std::to_string(expected_g.latent_dim) + ", channels " +
                        shape_string(expected_g.channels_per_block));
    if (!same(s.config.discriminator, expected_d))
        throw LoadError("architecture mismatch: checkpoint discriminator channels " +
                        shape_string(s.config.discriminator.channels_per_block) + ", expected " +
                        shape_string(expected_d.channels_per_block));
    return s;
}

} // namespace fsgan
