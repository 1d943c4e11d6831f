#pragma once

#include "jls/error.hpp"
#include "jls/timeseries.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jls {

/// Members of the generalized JLS family. M0prime is M0 calibrated on log differences.
enum class ModelId { M0, M1, M2, M3, M0prime };

class ModelSpec {
public:
    constexpr ModelSpec() = default;
    constexpr ModelSpec(ModelId id) : id_(id) {}  // NOLINT: implicit by intent

    [[nodiscard]] constexpr ModelId id() const { return id_; }
    [[nodiscard]] constexpr bool free_p1() const { return id_ == ModelId::M1 || id_ == ModelId::M3; }
    [[nodiscard]] constexpr bool free_gamma() const {
        return id_ == ModelId::M2 || id_ == ModelId::M3;
    }
    /// Total parameter count including the linear A, B, C.
    [[nodiscard]] constexpr int parameter_count() const {
        return 7 + int(free_p1()) + int(free_gamma());
    }

    /// True if `*this` is obtained from `h` by fixing parameters (strict nesting).
    [[nodiscard]] constexpr bool nested_in(ModelSpec h) const {
        if (id_ == ModelId::M0prime || h.id_ == ModelId::M0prime || id_ == h.id_) return false;
        return (!free_p1() || h.free_p1()) && (!free_gamma() || h.free_gamma()) &&
               parameter_count() < h.parameter_count();
    }

    [[nodiscard]] std::string name() const {
        switch (id_) {
            case ModelId::M0: return "M0";
            case ModelId::M1: return "M1";
            case ModelId::M2: return "M2";
            case ModelId::M3: return "M3";
            case ModelId::M0prime: return "M0prime";
        }
        return "?";
    }

    static ModelSpec parse(std::string_view s) {
        if (s == "M0") return ModelId::M0;
        if (s == "M1") return ModelId::M1;
        if (s == "M2") return ModelId::M2;
        if (s == "M3") return ModelId::M3;
        if (s == "M0prime" || s == "M0'" || s == "M0p") return ModelId::M0prime;
        throw ConfigError("unknown model spec '" + std::string(s) + "'");
    }

    friend constexpr bool operator==(ModelSpec, ModelSpec) = default;

private:
    ModelId id_ = ModelId::M0;
};

inline constexpr std::array<ModelSpec, 4> kCoreModels{ModelId::M0, ModelId::M1, ModelId::M2,
                                                      ModelId::M3};

/// Parameters of the LPPL family. t_c is a real-valued trading-day index.
struct LpplParams {
    double t_c = 0.0;
    double m = 0.5;
    double omega = 6.0;
    double phi = 0.0;
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
    double p1 = 0.0;
    double gamma = 1.0;
};

/// A gamma within this distance of 1 selects the exponential branch.
inline constexpr double kUnitGammaTol = 1e-5;
/// Normal-matrix condition number above which a linear solve is rejected.
inline constexpr double kMaxCondition = 1e12;

[[nodiscard]] constexpr bool is_unit_gamma(double gamma) {
    return 1.0 - gamma <= kUnitGammaTol * (1.0 + 1e-9);
}

/// p1 and gamma as seen by `spec` (forced values for parameters the spec fixes).
[[nodiscard]] constexpr double effective_p1(ModelSpec spec, const LpplParams& p) {
    return spec.free_p1() ? p.p1 : 0.0;
}
[[nodiscard]] constexpr double effective_gamma(ModelSpec spec, const LpplParams& p) {
    return spec.free_gamma() ? p.gamma : 1.0;
}

/// Wraps an angle into [0, 2*pi).
[[nodiscard]] inline double wrap_phase(double phi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(phi, two_pi);
    if (r < 0.0) r += two_pi;
    if (r >= two_pi) r = 0.0;
    return r;
}

/// F_LPPL(t) = A + B (t_c-t)^m + C (t_c-t)^m cos(omega ln(t_c-t) - phi).
[[nodiscard]] inline double eval_flppl(const LpplParams& p, double t) {
    const double x = p.t_c - t;
    if (!(x > 0.0)) throw DomainError("eval_flppl: t must be < t_c");
    const double lx = std::log(x);
    const double f = std::exp(p.m * lx);
    return p.A + p.B * f + p.C * f * std::cos(p.omega * lx - p.phi);
}

namespace detail {

// Price implied by F under the spec; NaN when undefined.
[[nodiscard]] inline double price_from_f(ModelSpec spec, double p1, double gamma, double F) {
    const double base = spec.free_p1() ? p1 : 0.0;
    if (!spec.free_gamma() || is_unit_gamma(gamma)) return base + std::exp(F);
    if (!(F > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return base + std::pow(F, 1.0 / (1.0 - gamma));
}

// Transformed target the linear subproblem regresses on; NaN when undefined.
[[nodiscard]] inline double transform_target(ModelSpec spec, double p1, double gamma, double price) {
    const double x = spec.free_p1() ? price - p1 : price;
    if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (!spec.free_gamma() || is_unit_gamma(gamma)) return std::log(x);
    return std::pow(x, 1.0 - gamma);
}

}  // namespace detail

/// Model price p_M(t) for the spec (exp form for gamma == 1, power form otherwise).
[[nodiscard]] inline double model_price(ModelSpec spec, const LpplParams& p, double t) {
    const double F = eval_flppl(p, t);
    const double price = detail::price_from_f(spec, effective_p1(spec, p), effective_gamma(spec, p), F);
    if (std::isnan(price)) throw ModelUndefined("model undefined on window: F_LPPL <= 0 with gamma < 1");
    return price;
}

struct LinearCoefficients {
    double A = 0.0, B = 0.0, C = 0.0;
    double condition = 0.0;  ///< condition number of the column-equilibrated normal matrix
};

enum class ProfileStatus { Ok, TimeDomain, TargetUndefined, IllConditioned, ModelUndefined };

namespace detail {

/// Scratch buffers reused across profiled evaluations.
struct ProfileWorkspace {
    std::vector<double> f, g, y;
};

/// Ordinary least squares of y on {1, f, g} through the 3x3 normal equations.
/// Columns are equilibrated before the solve and one refinement step is applied.
inline ProfileStatus solve_normal_3(std::span<const double> f, std::span<const double> g,
                                    std::span<const double> y, LinearCoefficients& out) {
    const std::size_t n = y.size();
    Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d row(1.0, f[i], g[i]);
        M.noalias() += row * row.transpose();
        b.noalias() += row * y[i];
    }
    Eigen::Vector3d d;
    for (int k = 0; k < 3; ++k) {
        if (!(M(k, k) > 0.0) || !std::isfinite(M(k, k))) return ProfileStatus::IllConditioned;
        d[k] = 1.0 / std::sqrt(M(k, k));
    }
    const Eigen::Matrix3d Ms = d.asDiagonal() * M * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(Ms, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()[0], hi = eig.eigenvalues()[2];
    out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(out.condition <= kMaxCondition)) return ProfileStatus::IllConditioned;

    const auto ldlt = Ms.ldlt();
    Eigen::Vector3d x = d.asDiagonal() * ldlt.solve(d.asDiagonal() * b);
    // one step of refinement against the original residual
    Eigen::Vector3d r = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (x[0] + x[1] * f[i] + x[2] * g[i]);
        r += Eigen::Vector3d(1.0, f[i], g[i]) * e;
    }
    x += d.asDiagonal() * ldlt.solve(d.asDiagonal() * r);
    if (!x.allFinite()) return ProfileStatus::IllConditioned;
    out.A = x[0];
    out.B = x[1];
    out.C = x[2];
    return ProfileStatus::Ok;
}

/// Fills the regressors f = (t_c-t)^m and g = f cos(omega ln(t_c-t) - phi).
inline ProfileStatus fill_regressors(const LpplParams& p, std::span<const double> t,
                                     ProfileWorkspace& ws) {
    const std::size_t n = t.size();
    ws.f.resize(n);
    ws.g.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = p.t_c - t[i];
        if (!(x > 0.0)) return ProfileStatus::TimeDomain;
        const double lx = std::log(x);
        const double f = std::exp(p.m * lx);
        ws.f[i] = f;
        ws.g[i] = f * std::cos(p.omega * lx - p.phi);
    }
    return ProfileStatus::Ok;
}

enum class CostKind { Relative, LogDiff };

/// Variable-projection core: given the nonlinear parameters in `p`, solves (A, B, C),
/// stores them in `p`, and writes per-day residuals. Relative residuals follow
/// R = (p - p_M) / p_M; LogDiff residuals are ln p - F.
inline ProfileStatus profile(ModelSpec spec, LpplParams& p, std::span<const double> t,
                             std::span<const double> price, ProfileWorkspace& ws,
                             std::span<double> residual, CostKind kind,
                             double* condition = nullptr) {
    if (auto st = fill_regressors(p, t, ws); st != ProfileStatus::Ok) return st;
    const double p1 = effective_p1(spec, p), gamma = effective_gamma(spec, p);
    const std::size_t n = t.size();
    ws.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ws.y[i] = transform_target(spec, p1, gamma, price[i]);
        if (std::isnan(ws.y[i])) return ProfileStatus::TargetUndefined;
    }
    LinearCoefficients abc;
    if (auto st = solve_normal_3(ws.f, ws.g, ws.y, abc); st != ProfileStatus::Ok) return st;
    if (condition) *condition = abc.condition;
    p.A = abc.A;
    p.B = abc.B;
    p.C = abc.C;
    for (std::size_t i = 0; i < n; ++i) {
        const double F = abc.A + abc.B * ws.f[i] + abc.C * ws.g[i];
        if (kind == CostKind::LogDiff) {
            residual[i] = ws.y[i] - F;
            continue;
        }
        const double pm = price_from_f(spec, p1, gamma, F);
        if (!(pm > 0.0) || !std::isfinite(pm)) return ProfileStatus::ModelUndefined;
        residual[i] = (price[i] - pm) / pm;
    }
    return ProfileStatus::Ok;
}

inline void throw_for(ProfileStatus st) {
    switch (st) {
        case ProfileStatus::Ok: return;
        case ProfileStatus::TimeDomain: throw DomainError("t_c must exceed every fitted t");
        case ProfileStatus::TargetUndefined:
            throw ModelUndefined("transformed target undefined on window (requires p1 < min p)");
        case ProfileStatus::IllConditioned:
            throw IllConditioned("normal matrix of the linear subproblem is ill-conditioned");
        case ProfileStatus::ModelUndefined:
            throw ModelUndefined("model undefined on window: F_LPPL <= 0 with gamma < 1");
    }
}

}  // namespace detail

/// Least-squares (A, B, C) for the nonlinear parameters in `nonlinear` (its A, B, C ignored).
/// Throws ModelUndefined, IllConditioned or DomainError.
[[nodiscard]] inline LinearCoefficients solve_linear_abc(ModelSpec spec, const LpplParams& nonlinear,
                                                         const DiscountedSeries& series) {
    detail::ProfileWorkspace ws;
    if (auto st = detail::fill_regressors(nonlinear, series.t_index, ws); st != ProfileStatus::Ok)
        detail::throw_for(st);
    const double p1 = effective_p1(spec, nonlinear), gamma = effective_gamma(spec, nonlinear);
    ws.y.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        ws.y[i] = detail::transform_target(spec, p1, gamma, series.values[i]);
        if (std::isnan(ws.y[i])) detail::throw_for(ProfileStatus::TargetUndefined);
    }
    LinearCoefficients out;
    detail::throw_for(detail::solve_normal_3(ws.f, ws.g, ws.y, out));
    return out;
}

struct ResidualVector {
    std::vector<double> values;
    double rms = 0.0;
};

[[nodiscard]] inline double rms_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / double(v.size()));
}

/// Residuals of the given (fully specified) parameters: R = (p - p_M)/p_M,
/// or ln p - F_LPPL for M0prime.
[[nodiscard]] inline ResidualVector residuals(ModelSpec spec, const LpplParams& p,
                                              const DiscountedSeries& series) {
    ResidualVector out;
    out.values.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double t = series.t_index[i];
        if (spec.id() == ModelId::M0prime) {
            out.values[i] = std::log(series.values[i]) - eval_flppl(p, t);
        } else {
            const double pm = model_price(spec, p, t);
            out.values[i] = (series.values[i] - pm) / pm;
        }
    }
    out.rms = rms_of(out.values);
    return out;
}

struct BubbleFlags {
    bool bubble_m = false;        ///< 0 < m < 1
    bool hazard_nonneg = false;   ///< b = -B m - |C| sqrt(m^2 + omega^2) >= 0
    bool lppl_conditions = false; ///< B < 0, 0.1 <= m <= 0.9, 6 <= omega <= 13, |C| <= 1
    double b = 0.0;
};

[[nodiscard]] inline double hazard_bound(const LpplParams& p) {
    return -p.B * p.m - std::abs(p.C) * std::sqrt(p.m * p.m + p.omega * p.omega);
}

[[nodiscard]] inline BubbleFlags check_bubble_conditions(const LpplParams& p) {
    BubbleFlags f;
    f.bubble_m = p.m > 0.0 && p.m < 1.0;
    f.b = hazard_bound(p);
    f.hazard_nonneg = f.b >= 0.0;
    f.lppl_conditions = p.B < 0.0 && p.m >= 0.1 && p.m <= 0.9 && p.omega >= 6.0 &&
                        p.omega <= 13.0 && p.C >= -1.0 && p.C <= 1.0;
    return f;
}

}  // namespace jls
