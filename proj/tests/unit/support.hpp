#pragma once

#include "fsgan/autograd.hpp"
#include "fsgan/config.hpp"
#include "fsgan/nets.hpp"
#include "fsgan/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace fsgan::testing {

inline GeneratorConfig tiny_generator()
{
    GeneratorConfig g;
    g.latent_dim = 8;
    g.channels_per_block = {4, 4, 4};
    g.seed = 11;
    return g;
}

inline DiscriminatorConfig tiny_discriminator()
{
    DiscriminatorConfig d;
    d.channels_per_block = {4, 4, 4};
    d.tap_resolutions = {16, 8};
    d.seed = 12;
    return d;
}

inline TrainConfig tiny_config()
{
    TrainConfig c;
    c.generator = tiny_generator();
    c.discriminator = tiny_discriminator();
    c.zsub.k = 3;
    c.iterations = 4;
    c.eval_n = 20;
    return c;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = scale * standard_normal(rng);
    return t;
}

inline void perturb(ParameterSet& params, Rng& rng, double scale)
{
    for (auto& p : params.items())
        for (auto& v : p.value.mutable_value().data) v += scale * standard_normal(rng);
}

struct GradCheck {
    double relative_error = 0.0;
    double analytic_norm = 0.0;
    std::size_t coordinates = 0;
    /// Coordinates whose +-h step moved some leaky ReLU input across zero.
    std::size_t kinks = 0;
};

/// Compares the backward-pass gradient of `loss` with central differences over every
/// scalar of `params`: ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||).
/// Coordinates whose difference stencil straddles an activation kink are left out,
/// since the central difference there is not an estimate of the derivative.
inline GradCheck check_gradient(ParameterSet& params, const std::function<Var()>& loss, double h = 1e-5)
{
    params.set_requires_grad(true);
    params.zero_grad();
    std::uint64_t base = 0;
    {
        ops::KinkProbe probe;
        backward(loss());
        base = probe.fingerprint();
    }
    auto evaluate = [&](bool& smooth) {
        ops::KinkProbe probe;
        const double v = loss().item();
        smooth = smooth && probe.fingerprint() == base;
        return v;
    };
    GradCheck out;
    std::vector<double> analytic, numeric;
    for (auto& p : params.items()) {
        const auto& g = p.value.grad();
        auto& w = p.value.mutable_value();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double keep = w.data[i];
            bool smooth = true;
            w.data[i] = keep + h;
            const double up = evaluate(smooth);
            w.data[i] = keep - h;
            const double down = evaluate(smooth);
            w.data[i] = keep;
            ++out.coordinates;
            if (!smooth) {
                ++out.kinks;
                continue;
            }
            analytic.push_back(g.size() ? g.data[i] : 0.0);
            numeric.push_back((up - down) / (2.0 * h));
        }
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    out.analytic_norm = std::sqrt(na);
    const double denom = std::max(std::sqrt(na), std::sqrt(nn));
    out.relative_error = denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
    return out;
}

} // namespace fsgan::testing
