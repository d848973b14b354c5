#pragma once

#include <cmath>
#include <random>

namespace dsthcn {

// Raw-bit draws so results do not depend on the standard library's
// distribution implementations.
inline double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform_draw(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * unit_draw(rng);
}

inline double gauss_draw(std::mt19937_64& rng) {
    double u1 = unit_draw(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = unit_draw(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace dsthcn
