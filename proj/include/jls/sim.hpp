#pragma once

#include "jls/error.hpp"
#include "jls/lppl.hpp"
#include "jls/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jls {

enum class SimMode { DeterministicCurve, FullStochastic };

struct SimConfig {
    ModelSpec spec = ModelId::M0;
    LpplParams params;   ///< generating values, t_c in day units from the first simulated day
    double kappa = 1.0;  ///< crash size scale in (0, 1]
    double sigma = 0.0;  ///< daily volatility
    std::size_t n_days = 0;
    std::uint64_t seed = 0;
    SimMode mode = SimMode::DeterministicCurve;
};

struct SimPath {
    std::vector<double> prices;
    std::optional<std::size_t> crash_day;
    bool jumped = false;
};

/// Hazard amplitudes implied by the price-form coefficients.
struct HazardCoefficients {
    double B_prime = 0.0;
    double C_prime = 0.0;
    double phi_prime = 0.0;
};

[[nodiscard]] inline HazardCoefficients hazard_coefficients(const LpplParams& p, double kappa) {
    HazardCoefficients h;
    const double norm = std::sqrt(p.m * p.m + p.omega * p.omega);
    h.B_prime = -p.m * p.B / kappa;
    h.C_prime = -p.C * norm / kappa;
    // differentiating C x^m cos(omega ln x - phi) shifts the phase by atan2(omega, m)
    h.phi_prime = p.phi - std::atan2(p.omega, p.m);
    return h;
}

/// h(t) = B'(t_c-t)^(m-1) + C'(t_c-t)^(m-1) cos(omega ln(t_c-t) - phi'), no sign check.
[[nodiscard]] inline double hazard_rate_unchecked(const LpplParams& p, double kappa, double t) {
    const double x = p.t_c - t;
    if (!(x > 0.0)) throw DomainError("hazard_rate: t must be < t_c");
    if (!(kappa > 0.0)) throw DomainError("hazard_rate: kappa must be > 0");
    const auto h = hazard_coefficients(p, kappa);
    const double lx = std::log(x);
    return std::exp((p.m - 1.0) * lx) * (h.B_prime + h.C_prime * std::cos(p.omega * lx - h.phi_prime));
}

/// Crash hazard rate. A negative value means the parameters violate the hazard
/// non-negativity bound and is reported as an internal consistency failure.
[[nodiscard]] inline double hazard_rate(const LpplParams& p, double kappa, double t) {
    const double h = hazard_rate_unchecked(p, kappa, t);
    const auto c = hazard_coefficients(p, kappa);
    const double scale = std::pow(p.t_c - t, p.m - 1.0) * (std::abs(c.B_prime) + std::abs(c.C_prime));
    if (h < -1e-12 * std::max(scale, 1.0))
        throw DomainError("hazard_rate: negative hazard at t=" + std::to_string(t) +
                          " (parameters violate the non-negativity bound)");
    return std::max(h, 0.0);
}

/// Simulates one path. Curve mode returns the model price without noise; stochastic mode
/// runs a daily Euler scheme with drift kappa (p - p1)^gamma h(t) / p, Gaussian noise of
/// size sigma, and a single crash of size kappa (p - p1)^gamma drawn with daily
/// probability min(h(t), 1). The path stops at the crash.
[[nodiscard]] inline SimPath simulate(const SimConfig& cfg) {
    if (cfg.n_days < 2) throw ConfigError("simulate: n_days must be >= 2");
    if (cfg.sigma < 0.0) throw ConfigError("simulate: sigma must be >= 0");
    if (!(cfg.kappa > 0.0 && cfg.kappa <= 1.0)) throw ConfigError("simulate: kappa must be in (0, 1]");
    const auto& p = cfg.params;
    if (!(p.t_c > double(cfg.n_days - 1)))
        throw ConfigError("simulate: t_c must lie beyond the last simulated day");

    SimPath path;
    path.prices.reserve(cfg.n_days);
    if (cfg.mode == SimMode::DeterministicCurve) {
        for (std::size_t t = 0; t < cfg.n_days; ++t)
            path.prices.push_back(model_price(cfg.spec, p, double(t)));
        return path;
    }

    if (hazard_bound(p) < 0.0)
        throw ConfigError("simulate: parameters violate hazard non-negativity (b < 0)");
    const double p1 = effective_p1(cfg.spec, p);
    const double gamma = effective_gamma(cfg.spec, p);
    Rng rng(cfg.seed);
    double price = model_price(cfg.spec, p, 0.0);
    path.prices.push_back(price);
    for (std::size_t t = 0; t + 1 < cfg.n_days; ++t) {
        const double h = hazard_rate(p, cfg.kappa, double(t));
        const double excess = std::pow(std::max(price - p1, 0.0), gamma);
        if (rng.uniform() < std::min(h, 1.0)) {
            price -= cfg.kappa * excess;
            path.prices.push_back(price);
            path.crash_day = t + 1;
            path.jumped = true;
            return path;
        }
        const double mu = cfg.kappa * excess * h / price;
        price = price * (1.0 + mu) + cfg.sigma * price * rng.normal();
        if (!(price > 0.0))
            throw DataError("simulate: price driven non-positive on day " + std::to_string(t + 1));
        path.prices.push_back(price);
    }
    return path;
}

}  // namespace jls
