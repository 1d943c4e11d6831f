#pragma once

#include "jls/calibration.hpp"
#include "jls/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace jls::stats {

/// Upper tail of the chi-square distribution with k degrees of freedom.
[[nodiscard]] inline double chi2_sf(double x, int k) {
    if (k < 1) throw DomainError("chi2_sf: degrees of freedom must be >= 1");
    if (std::isnan(x) || x < 0.0) throw DomainError("chi2_sf: x must be >= 0");
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::gamma_q(0.5 * k, 0.5 * x);
}

struct WilksResult {
    ModelSpec low, high;
    double T = 0.0;         ///< log-likelihood-ratio statistic
    int k = 0;              ///< degrees of freedom
    double p_value = 1.0;
    double sigma2_low = 0.0, sigma2_high = 0.0;
    std::size_t n = 0;
    bool clamped = false;   ///< raw statistic was negative (M_h fit worse than M_l) and set to 0
};

/// Wilks nested test of `fit_l` (restricted) against `fit_h` on the same window, with
/// maximum-likelihood variances sigma^2 = sum R^2 / N of the relative residuals:
///   T = 2N ln(sigma_l / sigma_h) + sum R_l^2 / sigma_l^2 - sum R_h^2 / sigma_h^2.
/// Two fits of the same spec with identical residuals give T = 0, k = 0, p = 1.
[[nodiscard]] inline WilksResult wilks_test(const FitResult& fit_l, const FitResult& fit_h) {
    const auto& rl = fit_l.residuals.values;
    const auto& rh = fit_h.residuals.values;
    if (rl.size() != rh.size() || rl.empty() || fit_l.bounds.tc_lo != fit_h.bounds.tc_lo)
        throw DomainError("wilks_test: fits were made on different windows");
    WilksResult w;
    w.low = fit_l.spec;
    w.high = fit_h.spec;
    w.n = rl.size();
    double ssl = 0.0, ssh = 0.0;
    for (double v : rl) ssl += v * v;
    for (double v : rh) ssh += v * v;
    const double N = double(w.n);
    w.sigma2_low = ssl / N;
    w.sigma2_high = ssh / N;

    if (fit_l.spec == fit_h.spec) {
        if (rl != rh) throw DomainError("wilks_test: models " + fit_l.spec.name() + " and " +
                                        fit_h.spec.name() + " are not nested");
        return w;
    }
    if (!fit_l.spec.nested_in(fit_h.spec))
        throw DomainError("wilks_test: " + fit_l.spec.name() + " is not nested in " +
                          fit_h.spec.name());
    w.k = fit_h.spec.parameter_count() - fit_l.spec.parameter_count();

    double T = 0.0;
    if (ssl == ssh) {
        T = 0.0;
    } else if (ssh == 0.0) {
        T = std::numeric_limits<double>::infinity();
    } else if (ssl == 0.0) {
        T = -std::numeric_limits<double>::infinity();
    } else {
        T = N * std::log(w.sigma2_low / w.sigma2_high) + ssl / w.sigma2_low - ssh / w.sigma2_high;
    }
    if (T < 0.0) {
        w.clamped = true;
        T = 0.0;
    }
    w.T = T;
    w.p_value = chi2_sf(T, w.k);
    return w;
}

}  // namespace jls::stats
