#pragma once

#include "jls/lppl.hpp"
#include "jls/random.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace jls::testing {

// Bubble-shaped generating parameters for `spec` on a window of n trading days: the price
// (or its transform) rises by 30-60% over the window, the oscillation amplitude is 5-15% of
// the power-law amplitude, p1 = 50 for specs with a fundamental value, and t_c falls inside
// the search interval away from its edges.
inline LpplParams bubble_params(ModelSpec spec, std::uint64_t seed, std::size_t n) {
    Rng r(seed);
    LpplParams p;
    const double T = double(n - 1);
    p.t_c = T + 0.4 * T * r.uniform(0.15, 0.85);
    p.m = r.uniform(0.2, 0.8);
    p.omega = r.uniform(5.0, 12.0);
    p.phi = r.uniform(0.5, 5.5);
    const double x0 = std::pow(p.t_c, p.m), x1 = std::pow(p.t_c - T, p.m);
    const double c = r.uniform(0.05, 0.15);
    const double start = spec.free_p1() ? 50.0 : 100.0;
    if (spec.free_p1()) p.p1 = 50.0;
    if (!spec.free_gamma()) {
        p.B = -r.uniform(0.3, 0.6) / (x0 - x1);
        p.A = std::log(start) - p.B * x0;
    } else {
        p.gamma = r.uniform(0.3, 0.7);
        const double F0 = std::pow(start, 1.0 - p.gamma);
        p.B = -r.uniform(0.3, 0.6) * F0 / (x0 - x1);
        p.A = F0 - p.B * x0;
    }
    p.C = c * std::abs(p.B);
    return p;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace jls::testing
