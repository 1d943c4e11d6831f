#pragma once

#include "jls/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

namespace jls::stats {

/// Outcome of one unit-root test (constant in the test regression, no trend).
struct UnitRootResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    bool stationary = false;   ///< unit-root null rejected at the requested level
    bool degenerate = false;   ///< constant input; stationary by convention
    std::size_t lags = 0;      ///< augmentation lags (DF) or Bartlett truncation (PP)
};

struct StationarityResult {
    UnitRootResult pp;
    UnitRootResult df;
    [[nodiscard]] bool pp_stationary() const { return pp.stationary; }
    [[nodiscard]] bool df_stationary() const { return df.stationary; }
};

namespace detail {

// Finite-sample Dickey-Fuller critical values for the constant-only regression
// (tau_mu), by sample size, at 1%, 5% and 10%.
inline constexpr std::array<double, 6> kDfSizes{25, 50, 100, 250, 500, 0 /* infinity */};
inline constexpr std::array<std::array<double, 6>, 3> kDfTauMu{{
    {-3.75, -3.58, -3.51, -3.46, -3.44, -3.43},
    {-3.00, -2.93, -2.89, -2.88, -2.87, -2.86},
    {-2.63, -2.60, -2.58, -2.57, -2.57, -2.57},
}};

inline bool is_constant(std::span<const double> x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return *hi - *lo <= 1e-14 * std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
}

struct DfRegression {
    double rho = 0.0;
    double se_rho = 0.0;
    double s2 = 0.0;                 ///< residual variance with dof correction
    Eigen::VectorXd residuals;
    std::size_t nobs = 0;
};

// OLS of dx_t on [1, x_{t-1}, dx_{t-1}, ..., dx_{t-lags}].
inline DfRegression df_regression(std::span<const double> x, std::size_t lags) {
    const std::size_t n = x.size();
    const std::size_t start = lags + 1;
    const auto T = Eigen::Index(n - start);
    const auto k = Eigen::Index(2 + lags);
    Eigen::MatrixXd X(T, k);
    Eigen::VectorXd y(T);
    for (Eigen::Index r = 0; r < T; ++r) {
        const std::size_t t = start + std::size_t(r);
        y[r] = x[t] - x[t - 1];
        X(r, 0) = 1.0;
        X(r, 1) = x[t - 1];
        for (std::size_t j = 1; j <= lags; ++j) X(r, Eigen::Index(1 + j)) = x[t - j] - x[t - j - 1];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    DfRegression out;
    const Eigen::VectorXd beta = qr.solve(y);
    out.residuals = y - X * beta;
    out.nobs = std::size_t(T);
    out.s2 = out.residuals.squaredNorm() / double(T - k);
    const Eigen::MatrixXd XtX_inv = (X.transpose() * X).inverse();
    out.rho = beta[1];
    out.se_rho = std::sqrt(out.s2 * XtX_inv(1, 1));
    return out;
}

}  // namespace detail

/// Critical value of the constant-only Dickey-Fuller distribution for `n` observations,
/// linearly interpolated in 1/n. Supported levels: 0.99, 0.95, 0.90.
[[nodiscard]] inline double df_critical_value(std::size_t n, double level = 0.99) {
    int row = -1;
    if (std::abs(level - 0.99) < 1e-9) row = 0;
    if (std::abs(level - 0.95) < 1e-9) row = 1;
    if (std::abs(level - 0.90) < 1e-9) row = 2;
    if (row < 0) throw DomainError("unit-root tests support levels 0.99, 0.95 and 0.90");
    const auto& cv = detail::kDfTauMu[std::size_t(row)];
    const double inv_n = n == 0 ? 0.0 : 1.0 / double(n);
    auto inv = [](double size) { return size == 0.0 ? 0.0 : 1.0 / size; };
    if (inv_n >= inv(detail::kDfSizes[0])) return cv[0];
    for (std::size_t i = 0; i + 1 < detail::kDfSizes.size(); ++i) {
        const double a = inv(detail::kDfSizes[i]), b = inv(detail::kDfSizes[i + 1]);
        if (inv_n <= a && inv_n >= b) {
            const double w = (a - inv_n) / (a - b);
            return cv[i] + w * (cv[i + 1] - cv[i]);
        }
    }
    return cv.back();
}

/// Dickey-Fuller test: dx_t = alpha + rho x_{t-1} (+ lagged differences) + e_t.
/// Stationary when the t-statistic on rho falls below the critical value.
[[nodiscard]] inline UnitRootResult adf_test(std::span<const double> x, double level = 0.99,
                                             std::size_t lags = 0) {
    if (x.size() < 25) throw DomainError("adf_test: need at least 25 observations");
    if (x.size() < lags + 10) throw DomainError("adf_test: too many lags for the series length");
    UnitRootResult r;
    r.lags = lags;
    r.critical_value = df_critical_value(x.size(), level);
    if (detail::is_constant(x)) {
        r.degenerate = true;
        r.stationary = true;
        return r;
    }
    const auto reg = detail::df_regression(x, lags);
    if (!(reg.se_rho > 0.0) || !std::isfinite(reg.se_rho)) {
        r.degenerate = true;
        r.stationary = true;
        return r;
    }
    r.statistic = reg.rho / reg.se_rho;
    r.stationary = r.statistic < r.critical_value;
    return r;
}

/// Bartlett truncation lag floor(4 (n/100)^(2/9)).
[[nodiscard]] inline std::size_t newey_west_lags(std::size_t n) {
    return std::size_t(std::floor(4.0 * std::pow(double(n) / 100.0, 2.0 / 9.0)));
}

/// Phillips-Perron Z_t test on the constant-only regression, Newey-West long-run
/// variance with a Bartlett kernel. Same critical values as the Dickey-Fuller test.
[[nodiscard]] inline UnitRootResult pp_test(std::span<const double> x, double level = 0.99) {
    if (x.size() < 25) throw DomainError("pp_test: need at least 25 observations");
    UnitRootResult r;
    r.lags = newey_west_lags(x.size());
    r.critical_value = df_critical_value(x.size(), level);
    if (detail::is_constant(x)) {
        r.degenerate = true;
        r.stationary = true;
        return r;
    }
    const auto reg = detail::df_regression(x, 0);
    if (!(reg.se_rho > 0.0) || !std::isfinite(reg.se_rho)) {
        r.degenerate = true;
        r.stationary = true;
        return r;
    }
    const auto& u = reg.residuals;
    const double T = double(reg.nobs);
    const double gamma0 = u.squaredNorm() / T;
    double lr = gamma0;
    for (std::size_t j = 1; j <= r.lags && j < reg.nobs; ++j) {
        const auto J = Eigen::Index(j);
        const double gj = u.tail(u.size() - J).dot(u.head(u.size() - J)) / T;
        lr += 2.0 * (1.0 - double(j) / double(r.lags + 1)) * gj;
    }
    const double t_rho = reg.rho / reg.se_rho;
    const double lambda = std::sqrt(lr);
    const double s = std::sqrt(reg.s2);
    r.statistic = std::sqrt(gamma0 / lr) * t_rho - 0.5 * (lr - gamma0) / lambda * (T * reg.se_rho / s);
    r.stationary = r.statistic < r.critical_value;
    return r;
}

/// Both tests at the given level.
[[nodiscard]] inline StationarityResult stationarity(std::span<const double> x, double level = 0.99) {
    return {pp_test(x, level), adf_test(x, level)};
}

}  // namespace jls::stats
