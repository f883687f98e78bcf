#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace fsgan {

/// All stochastic choices draw from one engine type so that its full state can be
/// checkpointed. Distributions are constructed per call and hold no hidden state.
using Rng = std::mt19937_64;

double standard_normal(Rng& rng);
double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);

std::string rng_state(const Rng& rng);
Rng rng_from_state(const std::string& state);

} // namespace fsgan
