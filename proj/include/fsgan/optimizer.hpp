#pragma once

#include "fsgan/nets.hpp"

#include <cstdint>
#include <vector>

namespace fsgan {

struct AdamSettings {
    double lr = 0.002;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// Adam over one ParameterSet. Parameters and moments are kept at float32
/// precision after every update so checkpoints (float32 on disk) resume bit-exactly.
class Adam {
public:
    Adam() = default;
    Adam(const ParameterSet& params, AdamSettings settings);

    /// Applies one update from the accumulated gradients; parameters without a gradient are skipped.
    void step(ParameterSet& params);

    const AdamSettings& settings() const { return settings_; }
    std::uint64_t steps() const { return steps_; }
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void set_steps(std::uint64_t n) { steps_ = n; }

private:
    AdamSettings settings_;
    std::vector<Tensor> m_, v_;
    std::uint64_t steps_ = 0;
};

/// Rounds every value to the nearest float32.
void round_to_float(Tensor& t);

} // namespace fsgan
