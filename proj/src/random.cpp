#include "fsgan/random.hpp"

#include "fsgan/errors.hpp"

#include <sstream>

namespace fsgan {

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string rng_state(const Rng& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_state(const std::string& state)
{
    Rng rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) throw LoadError("invalid RNG state record");
    return rng;
}

} // namespace fsgan
