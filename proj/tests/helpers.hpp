#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dsthcn/rng.hpp"
#include "dsthcn/tensor.hpp"

namespace th {

inline void fill_uniform(dsthcn::Tensor& t, std::mt19937_64& rng, double lo = -1.0,
                         double hi = 1.0) {
    for (double& v : t.data) v = dsthcn::uniform_draw(rng, lo, hi);
}

// central finite difference of a scalar function of one buffer entry
inline double fd(const std::function<double()>& f, double& slot, double h = 1e-5) {
    const double saved = slot;
    slot = saved + h;
    const double up = f();
    slot = saved - h;
    const double dn = f();
    slot = saved;
    return (up - dn) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    // the absolute floor keeps finite-difference noise from blowing up the
    // ratio when the true derivative is (near) zero
    const double denom = std::max({std::abs(got), std::abs(want), 1e-5});
    return std::abs(got - want) / denom;
}

// compare analytic gradient buffer against finite differences of `loss`;
// checks at most `max_checks` evenly spaced entries, returns worst rel error
inline double check_grad(const std::function<double()>& loss, std::vector<double>& values,
                         const std::vector<double>& analytic, std::size_t max_checks = 0,
                         double h = 1e-5) {
    double worst = 0.0;
    const std::size_t n = values.size();
    const std::size_t step =
        (max_checks == 0 || n <= max_checks) ? 1 : (n + max_checks - 1) / max_checks;
    for (std::size_t i = 0; i < n; i += step) {
        const double num = fd(loss, values[i], h);
        worst = std::max(worst, rel_err(analytic[i], num));
    }
    return worst;
}

} // namespace th
