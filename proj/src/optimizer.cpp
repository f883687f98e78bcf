#include "fsgan/optimizer.hpp"

#include "fsgan/errors.hpp"

#include <cmath>

namespace fsgan {

void round_to_float(Tensor& t)
{
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

Adam::Adam(const ParameterSet& params, AdamSettings settings) : settings_(settings)
{
    for (const auto& p : params.items()) {
        m_.emplace_back(p.value.shape(), 0.0);
        v_.emplace_back(p.value.shape(), 0.0);
    }
}

void Adam::step(ParameterSet& params)
{
    auto items = params.items();
    if (items.size() != m_.size()) throw ConfigError("optimizer state does not match the parameter set");
    ++steps_;
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& g = items[k].value.grad();
        if (g.size() == 0) continue;
        auto& w = items[k].value.mutable_value();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = static_cast<float>(b1 * m.data[i] + (1.0 - b1) * gi);
            v.data[i] = static_cast<float>(b2 * v.data[i] + (1.0 - b2) * gi * gi);
            const double mhat = m.data[i] / c1;
            const double vhat = v.data[i] / c2;
            w.data[i] = static_cast<float>(w.data[i] - settings_.lr * mhat / (std::sqrt(vhat) + settings_.eps));
        }
    }
}

} // namespace fsgan
