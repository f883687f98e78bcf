#include "fsgan/nets.hpp"

#include "fsgan/errors.hpp"
#include "fsgan/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fsgan {

namespace {

bool is_supported_resolution(std::size_t r) { return r == 32 || r == 64; }

Tensor init_normal(Shape shape, double stddev, Rng& rng)
{
    Tensor t(std::move(shape));
    // float32-representable so checkpoints round-trip exactly
    for (auto& v : t.data) v = static_cast<float>(stddev * standard_normal(rng));
    return t;
}

// He initialisation for a leaky-rectifier that follows the layer.
double he_std(std::size_t fan_in) { return std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope) / static_cast<double>(fan_in)); }

std::string block_name(std::size_t r) { return "block" + std::to_string(r); }

} // namespace

// ---------------------------------------------------------------- configs

void GeneratorConfig::validate() const
{
    if (latent_dim == 0) throw ConfigError("generator latent_dim must be positive");
    if (base_resolution != 4) throw ConfigError("generator base_resolution must be 4");
    if (!is_supported_resolution(output_resolution))
        throw ConfigError("generator output_resolution must be 32 or 64, got " + std::to_string(output_resolution));
    if (channels_per_block.empty()) throw ConfigError("generator needs at least one block");
    if (std::ranges::any_of(channels_per_block, [](std::size_t c) { return c == 0; }))
        throw ConfigError("generator channel counts must be >= 1");
    if (base_resolution << channels_per_block.size() != output_resolution)
        throw ConfigError("generator: " + std::to_string(channels_per_block.size()) + " blocks from 4x4 give " +
                          std::to_string(base_resolution << channels_per_block.size()) + ", not " +
                          std::to_string(output_resolution));
}

std::vector<std::size_t> GeneratorConfig::block_resolutions() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < channels_per_block.size(); ++i) out.push_back(base_resolution << (i + 1));
    return out;
}

void DiscriminatorConfig::validate() const
{
    if (!is_supported_resolution(input_resolution))
        throw ConfigError("discriminator input_resolution must be 32 or 64, got " + std::to_string(input_resolution));
    if (channels_per_block.empty()) throw ConfigError("discriminator needs at least one block");
    if (std::ranges::any_of(channels_per_block, [](std::size_t c) { return c == 0; }))
        throw ConfigError("discriminator channel counts must be >= 1");
    if ((std::size_t{4} << channels_per_block.size()) != input_resolution)
        throw ConfigError("discriminator: " + std::to_string(channels_per_block.size()) +
                          " blocks do not reduce " + std::to_string(input_resolution) + " to 4x4");
    const auto res = block_resolutions();
    for (auto t : tap_resolutions)
        if (std::ranges::find(res, t) == res.end())
            throw ConfigError("discriminator has no block with output resolution " + std::to_string(t));
}

std::vector<std::size_t> DiscriminatorConfig::block_resolutions() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < channels_per_block.size(); ++i) out.push_back(input_resolution >> (i + 1));
    return out;
}

std::size_t DiscriminatorConfig::final_feature_count() const { return channels_per_block.back() * 16; }

std::size_t DiscriminatorConfig::channels_at(std::size_t resolution) const
{
    const auto res = block_resolutions();
    const auto it = std::ranges::find(res, resolution);
    if (it == res.end()) throw ConfigError("discriminator has no block with output resolution " + std::to_string(resolution));
    return channels_per_block[static_cast<std::size_t>(it - res.begin())];
}

// ---------------------------------------------------------------- parameters

ParameterSet::ParameterSet(const ParameterSet& other)
{
    params_.reserve(other.params_.size());
    for (const auto& p : other.params_) params_.push_back({p.name, p.value.clone_leaf()});
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other)
{
    if (this != &other) {
        ParameterSet copy(other);
        *this = std::move(copy);
    }
    return *this;
}

const Var& ParameterSet::add(std::string name, Tensor value)
{
    params_.push_back({std::move(name), Var::leaf(std::move(value), true)});
    return params_.back().value;
}

const Var& ParameterSet::get(const std::string& name) const
{
    for (const auto& p : params_)
        if (p.name == name) return p.value;
    throw ConfigError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.value().size();
    return n;
}

void ParameterSet::set_requires_grad(bool on)
{
    for (auto& p : params_) p.value.set_requires_grad(on);
}

void ParameterSet::zero_grad()
{
    for (auto& p : params_) p.value.zero_grad();
}

bool ParameterSet::equal_values(const ParameterSet& other) const
{
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i].value.value();
        const auto& b = other.params_[i].value.value();
        if (params_[i].name != other.params_[i].name || a.shape != b.shape) return false;
        if (std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

std::uint64_t ParameterSet::hash() const
{
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& p : params_) {
        mix(p.name.data(), p.name.size());
        mix(p.value.value().data.data(), p.value.value().size() * sizeof(double));
    }
    return h;
}

// ---------------------------------------------------------------- generator

Generator::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    Rng rng(cfg_.seed);
    const auto c0 = cfg_.channels_per_block.front();
    params_.add("fc.weight", init_normal({c0 * 16, cfg_.latent_dim}, he_std(cfg_.latent_dim), rng));
    params_.add("fc.bias", Tensor({c0 * 16}));
    std::size_t in = c0;
    const auto res = cfg_.block_resolutions();
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto out = cfg_.channels_per_block[i];
        params_.add(block_name(res[i]) + ".conv.weight", init_normal({out, in, 3, 3}, he_std(in * 9), rng));
        params_.add(block_name(res[i]) + ".conv.bias", Tensor({out}));
        in = out;
    }
    params_.add("to_rgb.weight", init_normal({3, in, 1, 1}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    params_.add("to_rgb.bias", Tensor({3}));
}

GeneratorOutput Generator::forward(const Tensor& z, std::span<const std::size_t> taps) const
{
    return forward(Var::constant(z), taps);
}

GeneratorOutput Generator::forward(const Var& z, std::span<const std::size_t> taps) const
{
    const auto& zs = z.shape();
    if (zs.size() != 2 || zs[1] != cfg_.latent_dim)
        throw ShapeError("generator expects latents of shape (B, " + std::to_string(cfg_.latent_dim) + "), got " +
                         shape_string(zs));
    const auto res = cfg_.block_resolutions();
    for (auto t : taps)
        if (std::ranges::find(res, t) == res.end())
            throw ConfigError("generator has no block with output resolution " + std::to_string(t));

    const auto batch = zs[0];
    const auto c0 = cfg_.channels_per_block.front();
    GeneratorOutput out;
    Var x = ops::linear(z, params_.get("fc.weight"), params_.get("fc.bias"));
    x = ops::leaky_relu(ops::reshape(x, {batch, c0, 4, 4}), kLeakySlope);
    for (auto r : res) {
        x = ops::upsample2x(x);
        x = ops::conv2d(x, params_.get(block_name(r) + ".conv.weight"), params_.get(block_name(r) + ".conv.bias"), 1);
        x = ops::leaky_relu(x, kLeakySlope);
        if (std::ranges::find(taps, r) != taps.end()) out.taps[r] = x;
    }
    x = ops::conv2d(x, params_.get("to_rgb.weight"), params_.get("to_rgb.bias"), 0);
    out.images = ops::tanh(x);
    return out;
}

void Generator::set_trainable(bool on)
{
    if (on && frozen_) throw ConfigError("cannot make a frozen generator trainable");
    params_.set_requires_grad(on);
}

void Generator::freeze()
{
    params_.set_requires_grad(false);
    params_.zero_grad();
    frozen_ = true;
}

// ---------------------------------------------------------------- discriminator

Discriminator::Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    Rng rng(cfg_.seed);
    std::size_t in = 3;
    const auto res = cfg_.block_resolutions();
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto out = cfg_.channels_per_block[i];
        params_.add(block_name(res[i]) + ".conv.weight", init_normal({out, in, 3, 3}, he_std(in * 9), rng));
        params_.add(block_name(res[i]) + ".conv.bias", Tensor({out}));
        in = out;
    }
    const auto features = cfg_.final_feature_count();
    params_.add("score.weight", init_normal({1, features}, 1.0 / std::sqrt(static_cast<double>(features)), rng));
    params_.add("score.bias", Tensor({1}));
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto c = cfg_.channels_per_block[i];
        params_.add("patch" + std::to_string(res[i]) + ".weight",
                    init_normal({1, c, 1, 1}, 1.0 / std::sqrt(static_cast<double>(c)), rng));
        params_.add("patch" + std::to_string(res[i]) + ".bias", Tensor({1}));
    }
}

DiscriminatorOutput Discriminator::forward(const Var& images, std::span<const std::size_t> taps,
                                           std::span<const MaskSpec> masks, std::size_t mask_layer) const
{
    const auto& s = images.shape();
    const auto r = cfg_.input_resolution;
    if (s.size() != 4 || s[1] != 3 || s[2] != r || s[3] != r)
        throw ShapeError("discriminator expects images of shape (B, 3, " + std::to_string(r) + ", " + std::to_string(r) +
                         "), got " + shape_string(s));
    const auto res = cfg_.block_resolutions();
    for (auto t : taps)
        if (std::ranges::find(res, t) == res.end())
            throw ConfigError("discriminator has no block with output resolution " + std::to_string(t));
    if (!masks.empty() && std::ranges::find(res, mask_layer) == res.end())
        throw ConfigError("cannot mask: discriminator has no block with output resolution " + std::to_string(mask_layer));

    const auto batch = s[0];
    DiscriminatorOutput out;
    Var x = images;
    for (auto br : res) {
        x = ops::conv2d(x, params_.get(block_name(br) + ".conv.weight"), params_.get(block_name(br) + ".conv.bias"), 1);
        x = ops::avgpool2x(ops::leaky_relu(x, kLeakySlope));
        if (std::ranges::find(taps, br) != taps.end()) out.taps[br] = x;
        if (!masks.empty() && br == mask_layer) {
            const auto shape = x.shape();
            x = ops::reshape(apply_masks(ops::reshape(x, {batch, x.value().row_size()}), masks), shape);
        }
    }
    out.final_features = ops::reshape(x, {batch, cfg_.final_feature_count()});
    out.scores = score_head(out.final_features);
    return out;
}

Var Discriminator::score_head(const Var& final_features) const
{
    const auto batch = final_features.shape().at(0);
    return ops::reshape(ops::linear(final_features, params_.get("score.weight"), params_.get("score.bias")), {batch});
}

Var Discriminator::patch_scores(std::size_t resolution, const Var& activation) const
{
    const auto name = "patch" + std::to_string(resolution);
    return ops::conv2d(activation, params_.get(name + ".weight"), params_.get(name + ".bias"), 0);
}

void Discriminator::set_trainable(bool on)
{
    if (on && frozen_) throw ConfigError("cannot make a frozen discriminator trainable");
    params_.set_requires_grad(on);
}

void Discriminator::freeze()
{
    params_.set_requires_grad(false);
    params_.zero_grad();
    frozen_ = true;
}

// ---------------------------------------------------------------- free functions

Generator build_generator(const GeneratorConfig& cfg) { return Generator(cfg); }

Discriminator build_discriminator(const DiscriminatorConfig& cfg) { return Discriminator(cfg); }

Generator clone_frozen(const Generator& model)
{
    Generator copy = model;
    copy.freeze();
    return copy;
}

Discriminator clone_frozen(const Discriminator& model)
{
    Discriminator copy = model;
    copy.freeze();
    return copy;
}

ModelPair ModelPair::from_source(const Generator& g, const Discriminator& d)
{
    // Rebuilt rather than copied so a target taken from a frozen model is trainable.
    Generator gt(g.config());
    gt.parameters() = g.parameters();
    Discriminator dt(d.config());
    dt.parameters() = d.parameters();
    gt.set_trainable(true);
    dt.set_trainable(true);
    return ModelPair{clone_frozen(g), std::move(gt), clone_frozen(d), std::move(dt)};
}

void FeatureTapSet::validate(const GeneratorConfig& g, const DiscriminatorConfig& d) const
{
    if (generator_taps.empty() && discriminator_taps.empty()) throw ConfigError("feature tap set is empty");
    const auto gres = g.block_resolutions();
    for (auto t : generator_taps)
        if (std::ranges::find(gres, t) == gres.end())
            throw ConfigError("generator has no block with output resolution " + std::to_string(t));
    const auto dres = d.block_resolutions();
    for (auto t : discriminator_taps)
        if (std::ranges::find(dres, t) == dres.end())
            throw ConfigError("discriminator has no block with output resolution " + std::to_string(t));
}

std::pair<std::size_t, std::size_t> ReceptiveField::span_of(std::size_t u, std::size_t extent) const
{
    const auto lo = first + static_cast<std::ptrdiff_t>(u * jump);
    const auto hi = lo + static_cast<std::ptrdiff_t>(size) - 1;
    return {static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0)),
            static_cast<std::size_t>(std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(extent) - 1))};
}

ReceptiveField receptive_field(const DiscriminatorConfig& cfg, std::size_t resolution)
{
    ReceptiveField rf;
    for (auto br : cfg.block_resolutions()) {
        // 3x3 convolution, padding 1.
        rf.size += 2 * rf.jump;
        rf.first -= static_cast<std::ptrdiff_t>(rf.jump);
        // 2x2 average pool, stride 2.
        rf.size += rf.jump;
        rf.jump *= 2;
        if (br == resolution) return rf;
    }
    throw ConfigError("discriminator has no block with output resolution " + std::to_string(resolution));
}

} // namespace fsgan
