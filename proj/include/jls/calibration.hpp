#pragma once

#include "jls/error.hpp"
#include "jls/lppl.hpp"
#include "jls/parallel.hpp"
#include "jls/random.hpp"
#include "jls/timeseries.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

namespace jls {

/// Search intervals for the nonlinear parameters. t_c is in trading-day index units
/// of the window (t1 = 0, t2 = N-1).
struct SearchBounds {
    double tc_lo = 0.0, tc_hi = 0.0;
    double m_lo = 1e-5, m_hi = 1.0 - 1e-5;
    double omega_lo = 0.01, omega_hi = 40.0;
    double phi_lo = 0.0, phi_hi = 2.0 * std::numbers::pi - 1e-5;
    double p1_lo = 0.0, p1_hi = 0.0;
    double gamma_lo = 1e-5, gamma_hi = 1.0 - kUnitGammaTol;

    /// Default intervals for a window: t_c in [t2, t2 + 0.4 (t2 - t1)], p1 in
    /// [0.2 p_min, 0.99 p_min] (the lower edge is the acceptance floor for p1).
    static SearchBounds for_series(const DiscountedSeries& s) {
        if (s.size() < 2) throw DataError("search bounds need at least two observations");
        SearchBounds b;
        const double t1 = s.t_index.front(), t2 = s.t_index.back();
        b.tc_lo = t2;
        b.tc_hi = t2 + 0.4 * (t2 - t1);
        const double pmin = s.min_value();
        b.p1_lo = std::max(0.01, 0.2 * pmin);
        b.p1_hi = 0.99 * pmin;
        return b;
    }

    void validate() const {
        auto check = [](double lo, double hi, const char* name) {
            if (!(lo < hi)) throw ConfigError(std::string("empty search interval for ") + name);
        };
        check(tc_lo, tc_hi, "t_c");
        check(m_lo, m_hi, "m");
        check(omega_lo, omega_hi, "omega");
        check(phi_lo, phi_hi, "phi");
        check(p1_lo, p1_hi, "p1");
        check(gamma_lo, gamma_hi, "gamma");
    }
};

/// Outcome of calibrating one spec on one window.
struct FitResult {
    ModelSpec spec;
    LpplParams params;
    ResidualVector residuals;  ///< relative residuals R(t), for every spec
    double cost = 0.0;         ///< sum of R(t)^2
    double objective = 0.0;    ///< minimized objective (== cost except for M0prime)
    double rms = 0.0;
    BubbleFlags flags;
    bool boundary_ok = false;
    std::size_t n_starts_tried = 0;
    std::size_t n_rejected = 0;  ///< candidates whose polish failed
    std::uint64_t seed = 0;
    SearchBounds bounds;
    double condition = 0.0;
};

struct LmOptions {
    int max_iterations = 500;
    double relative_tolerance = 1e-10;
    double fd_step = 1e-6;
    double initial_damping = 1e-3;
};

struct FitOptions {
    std::size_t n_starts = 50;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::size_t grid_cells = 8;     ///< taboo grid resolution per dimension
    std::size_t lhs_per_start = 8;  ///< Latin-hypercube samples per requested start
    LmOptions lm;
    std::vector<LpplParams> extra_seeds;  ///< polished in addition to the taboo starts
};

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Free nonlinear coordinates of a spec: t_c, m, omega, phi, then p1 and/or gamma.
struct ParamLayout {
    ModelSpec spec;
    int dims = 4;
    int p1_index = -1;
    int gamma_index = -1;

    explicit ParamLayout(ModelSpec s) : spec(s) {
        if (s.free_p1()) p1_index = dims++;
        if (s.free_gamma()) gamma_index = dims++;
    }

    [[nodiscard]] Eigen::VectorXd pack(const LpplParams& p) const {
        Eigen::VectorXd v(dims);
        v << p.t_c, p.m, p.omega, p.phi, Eigen::VectorXd::Zero(dims - 4);
        if (p1_index >= 0) v[p1_index] = p.p1;
        if (gamma_index >= 0) v[gamma_index] = p.gamma;
        return v;
    }

    [[nodiscard]] LpplParams unpack(const Eigen::VectorXd& v) const {
        LpplParams p;
        p.t_c = v[0];
        p.m = v[1];
        p.omega = v[2];
        p.phi = v[3];
        p.p1 = p1_index >= 0 ? v[p1_index] : 0.0;
        p.gamma = gamma_index >= 0 ? v[gamma_index] : 1.0;
        return p;
    }

    [[nodiscard]] bool periodic(int k) const { return k == 3; }

    [[nodiscard]] std::pair<double, double> interval(const SearchBounds& b, int k) const {
        if (k == 0) return {b.tc_lo, b.tc_hi};
        if (k == 1) return {b.m_lo, b.m_hi};
        if (k == 2) return {b.omega_lo, b.omega_hi};
        if (k == 3) return {b.phi_lo, b.phi_hi};
        if (k == p1_index) return {b.p1_lo, b.p1_hi};
        return {b.gamma_lo, b.gamma_hi};
    }

    /// Clamp into the box; phi is wrapped. t_c stays strictly beyond t2.
    void project(Eigen::VectorXd& v, const SearchBounds& b) const {
        for (int k = 0; k < dims; ++k) {
            if (periodic(k)) {
                v[k] = wrap_phase(v[k]);
                continue;
            }
            auto [lo, hi] = interval(b, k);
            if (k == 0) lo += 1e-6 * (hi - lo);
            v[k] = std::clamp(v[k], lo, hi);
        }
    }
};

/// Profiled least-squares problem for one spec on one window.
class ProfiledProblem {
public:
    ProfiledProblem(ModelSpec spec, const DiscountedSeries& series)
        : spec_(spec),
          layout_(spec),
          kind_(spec.id() == ModelId::M0prime ? CostKind::LogDiff : CostKind::Relative),
          t_(series.t_index),
          p_(series.values) {}

    [[nodiscard]] const ParamLayout& layout() const { return layout_; }
    [[nodiscard]] std::size_t size() const { return t_.size(); }

    /// Residual vector at `v`; fills linear coefficients into `out`. False if undefined.
    bool residual(const Eigen::VectorXd& v, Eigen::VectorXd& r, LpplParams& out,
                  ProfileWorkspace& ws, double* condition = nullptr) const {
        out = layout_.unpack(v);
        r.resize(Eigen::Index(t_.size()));
        return profile(spec_, out, t_, p_, ws, std::span<double>(r.data(), t_.size()), kind_,
                       condition) == ProfileStatus::Ok &&
               r.allFinite();
    }

    [[nodiscard]] double cost(const Eigen::VectorXd& v, ProfileWorkspace& ws) const {
        Eigen::VectorXd r;
        LpplParams p;
        if (!residual(v, r, p, ws)) return std::numeric_limits<double>::infinity();
        return r.squaredNorm();
    }

private:
    ModelSpec spec_;
    ParamLayout layout_;
    CostKind kind_;
    std::span<const double> t_;
    std::span<const double> p_;
};

}  // namespace detail

/// Deterministic starting points: Latin-hypercube sampling of the box followed by a
/// taboo walk over a grid of `grid_cells` per dimension (visited cells are never
/// re-entered). Returns the best point of each of the `n_starts` best cells.
/// With n_starts == 1 the single start is the midpoint of the bounds.
[[nodiscard]] inline std::vector<LpplParams> taboo_seed_points(ModelSpec spec,
                                                               const SearchBounds& bounds,
                                                               const DiscountedSeries& series,
                                                               std::size_t n_starts,
                                                               std::uint64_t seed,
                                                               std::size_t grid_cells = 8,
                                                               std::size_t lhs_per_start = 8) {
    if (n_starts == 0) throw ConfigError("n_starts must be >= 1");
    bounds.validate();
    const detail::ParamLayout layout(spec);
    const int d = layout.dims;
    if (n_starts == 1) {
        Eigen::VectorXd mid(d);
        for (int k = 0; k < d; ++k) {
            auto [lo, hi] = layout.interval(bounds, k);
            mid[k] = 0.5 * (lo + hi);
        }
        return {layout.unpack(mid)};
    }

    const detail::ProfiledProblem problem(spec, series);
    detail::ProfileWorkspace ws;
    Rng rng(seed);
    const std::size_t G = std::max<std::size_t>(2, grid_cells);
    const auto ud = std::size_t(d);

    struct Sample {
        Eigen::VectorXd x;
        double cost;
        std::uint64_t cell;
    };
    std::vector<Sample> samples;
    std::unordered_set<std::uint64_t> taboo;

    auto cell_coords = [&](const Eigen::VectorXd& x) {
        std::vector<std::size_t> c(ud);
        for (int k = 0; k < d; ++k) {
            auto [lo, hi] = layout.interval(bounds, k);
            auto idx = std::size_t(std::floor((x[k] - lo) / (hi - lo) * double(G)));
            c[std::size_t(k)] = std::min(idx, G - 1);
        }
        return c;
    };
    auto key_of = [&](const std::vector<std::size_t>& c) {
        std::uint64_t key = 0;
        for (int k = d - 1; k >= 0; --k) key = key * G + c[std::size_t(k)];
        return key;
    };
    auto sample_in_cell = [&](const std::vector<std::size_t>& c) {
        Eigen::VectorXd x(d);
        for (int k = 0; k < d; ++k) {
            auto [lo, hi] = layout.interval(bounds, k);
            const double w = (hi - lo) / double(G);
            x[k] = lo + w * (double(c[std::size_t(k)]) + rng.uniform());
        }
        layout.project(x, bounds);
        return x;
    };
    auto evaluate = [&](Eigen::VectorXd x) {
        const double c = problem.cost(x, ws);
        const std::uint64_t key = key_of(cell_coords(x));
        taboo.insert(key);
        samples.push_back({std::move(x), c, key});
        return samples.size() - 1;
    };

    // Latin hypercube: one stratum per sample and dimension, strata permuted per dimension.
    const std::size_t n_lhs = std::max<std::size_t>(lhs_per_start * n_starts, 4 * std::size_t(d));
    std::vector<std::vector<std::size_t>> strata(ud, std::vector<std::size_t>(n_lhs));
    for (auto& s : strata) {
        for (std::size_t i = 0; i < n_lhs; ++i) s[i] = i;
        rng.shuffle(std::span<std::size_t>(s));
    }
    for (std::size_t i = 0; i < n_lhs; ++i) {
        Eigen::VectorXd x(d);
        for (int k = 0; k < d; ++k) {
            auto [lo, hi] = layout.interval(bounds, k);
            x[k] = lo + (hi - lo) * (double(strata[std::size_t(k)][i]) + rng.uniform()) / double(n_lhs);
        }
        layout.project(x, bounds);
        evaluate(std::move(x));
    }

    // Taboo walk: move to the best non-taboo neighbouring cell, even when it is worse.
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].cost < samples[b].cost; });
    const std::size_t n_walks = std::min<std::size_t>(4, order.size());
    const std::size_t steps_per_walk = std::max<std::size_t>(1, (2 * n_starts) / n_walks);
    for (std::size_t w = 0; w < n_walks; ++w) {
        auto current = cell_coords(samples[order[w]].x);
        for (std::size_t step = 0; step < steps_per_walk; ++step) {
            double best_cost = std::numeric_limits<double>::infinity();
            std::optional<std::vector<std::size_t>> best_cell;
            for (int k = 0; k < d; ++k) {
                for (int dir : {-1, +1}) {
                    auto c = current;
                    auto& ck = c[std::size_t(k)];
                    if (layout.periodic(k)) {
                        ck = std::size_t((int(ck) + dir + int(G)) % int(G));
                    } else if ((dir < 0 && ck == 0) || (dir > 0 && ck + 1 >= G)) {
                        continue;
                    } else {
                        ck = std::size_t(int(ck) + dir);
                    }
                    if (taboo.contains(key_of(c))) continue;
                    const auto idx = evaluate(sample_in_cell(c));
                    if (!best_cell || samples[idx].cost < best_cost) {
                        best_cost = samples[idx].cost;
                        best_cell = c;
                    }
                }
            }
            if (best_cell) {
                current = *best_cell;
                continue;
            }
            // every neighbour is taboo: jump to a random unvisited cell
            for (int attempt = 0; attempt < 64; ++attempt) {
                std::vector<std::size_t> c(ud);
                for (auto& ck : c) ck = rng.below(G);
                if (taboo.contains(key_of(c))) continue;
                evaluate(sample_in_cell(c));
                current = c;
                break;
            }
        }
    }

    // Best sample per cell, best cells first.
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (samples[a].cost != samples[b].cost) return samples[a].cost < samples[b].cost;
        if (samples[a].x[0] != samples[b].x[0]) return samples[a].x[0] < samples[b].x[0];
        return samples[a].x[1] < samples[b].x[1];
    });
    std::unordered_set<std::uint64_t> used;
    std::vector<LpplParams> out;
    for (std::size_t i : idx) {
        if (out.size() >= n_starts) break;
        if (!std::isfinite(samples[i].cost)) break;
        if (!used.insert(samples[i].cell).second) continue;
        out.push_back(layout.unpack(samples[i].x));
    }
    return out;
}

struct PolishResult {
    LpplParams params;  ///< includes the profiled A, B, C
    double objective = 0.0;
    int iterations = 0;
    double condition = 0.0;
};

/// Levenberg-Marquardt on the profiled objective over the spec's free nonlinear
/// parameters. Central-difference Jacobian, multiplicative damping, projection onto
/// the bounds, phi wrapped into [0, 2*pi). Returns nullopt when the candidate itself
/// is not admissible (model undefined or ill-conditioned linear solve).
[[nodiscard]] inline std::optional<PolishResult> lm_polish(ModelSpec spec,
                                                           const LpplParams& candidate,
                                                           const DiscountedSeries& series,
                                                           const SearchBounds& bounds,
                                                           const LmOptions& opt = {}) {
    const detail::ProfiledProblem problem(spec, series);
    const auto& layout = problem.layout();
    const int d = layout.dims;
    detail::ProfileWorkspace ws;

    Eigen::VectorXd x = layout.pack(candidate);
    layout.project(x, bounds);
    Eigen::VectorXd r;
    LpplParams scratch;
    double condition = 0.0;
    if (!problem.residual(x, r, scratch, ws, &condition)) return std::nullopt;
    double cost = r.squaredNorm();

    const Eigen::Index n = r.size();
    Eigen::MatrixXd J(n, d);
    Eigen::VectorXd r_plus, r_minus, r_trial;
    double lambda = opt.initial_damping;
    int iter = 0;

    auto inside = [&](const Eigen::VectorXd& v, int k) {
        if (layout.periodic(k)) return true;
        auto [lo, hi] = layout.interval(bounds, k);
        if (k == 0) lo += 1e-6 * (hi - lo);
        return v[k] >= lo && v[k] <= hi;
    };

    for (; iter < opt.max_iterations && cost > 0.0; ++iter) {
        // Jacobian by central differences, falling back to one-sided at the box edge.
        bool jac_ok = true;
        for (int k = 0; k < d && jac_ok; ++k) {
            const double h = opt.fd_step * std::max(std::abs(x[k]), 1.0);
            Eigen::VectorXd xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            const bool up = inside(xp, k) && problem.residual(xp, r_plus, scratch, ws);
            const bool dn = inside(xm, k) && problem.residual(xm, r_minus, scratch, ws);
            if (up && dn)
                J.col(k) = (r_plus - r_minus) / (2.0 * h);
            else if (up)
                J.col(k) = (r_plus - r) / h;
            else if (dn)
                J.col(k) = (r - r_minus) / h;
            else
                jac_ok = false;
        }
        if (!jac_ok) break;

        const Eigen::MatrixXd H = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        Eigen::VectorXd diag = H.diagonal();
        const double floor = std::max(1e-300, 1e-12 * diag.maxCoeff());
        for (int k = 0; k < d; ++k) diag[k] = std::max(diag[k], floor);

        bool accepted = false, converged = false;
        while (lambda <= 1e16) {
            Eigen::MatrixXd A = H;
            A.diagonal() += lambda * diag;
            const Eigen::VectorXd delta = A.ldlt().solve(-g);
            Eigen::VectorXd trial = x + delta;
            layout.project(trial, bounds);
            if (delta.allFinite() && problem.residual(trial, r_trial, scratch, ws, &condition)) {
                const double c = r_trial.squaredNorm();
                if (c < cost) {
                    const double rel = (cost - c) / cost;
                    x = trial;
                    r = r_trial;
                    cost = c;
                    lambda = std::max(lambda / 10.0, 1e-15);
                    accepted = true;
                    converged = rel < opt.relative_tolerance;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!accepted || converged) {
            ++iter;
            break;
        }
    }
    LpplParams final_params;
    problem.residual(x, r, final_params, ws, &condition);
    final_params.phi = wrap_phase(final_params.phi);
    return PolishResult{final_params, r.squaredNorm(), iter, condition};
}

/// True when t_c, m, p1 and gamma (those free in the spec) lie at least 1% of their
/// search-interval width away from both endpoints.
[[nodiscard]] inline bool boundary_ok(ModelSpec spec, const LpplParams& p, const SearchBounds& b) {
    auto away = [](double x, double lo, double hi) {
        const double margin = 0.01 * (hi - lo);
        return x - lo >= margin && hi - x >= margin;
    };
    bool ok = away(p.t_c, b.tc_lo, b.tc_hi) && away(p.m, b.m_lo, b.m_hi);
    if (spec.free_p1()) ok = ok && away(p.p1, b.p1_lo, b.p1_hi) && p.p1 >= b.p1_lo;
    if (spec.free_gamma()) ok = ok && away(p.gamma, b.gamma_lo, b.gamma_hi);
    return ok;
}

/// Maps a lower-dimensional solution into `target` coordinates: a fixed p1 = 0 becomes the
/// lowest admissible p1 and a fixed gamma = 1 becomes the gamma cap (exponential branch).
[[nodiscard]] inline LpplParams lift_params(ModelSpec from, ModelSpec target, const LpplParams& p,
                                            const SearchBounds& b) {
    LpplParams out = p;
    out.p1 = from.free_p1() ? p.p1 : b.p1_lo;
    out.gamma = from.free_gamma() ? p.gamma : b.gamma_hi;
    if (!target.free_p1()) out.p1 = 0.0;
    if (!target.free_gamma()) out.gamma = 1.0;
    return out;
}

namespace detail {

inline FitResult make_fit_result(ModelSpec spec, const PolishResult& best,
                                 const DiscountedSeries& series, const SearchBounds& bounds) {
    FitResult out;
    out.spec = spec;
    out.params = best.params;
    // (C, phi) and (-C, phi + pi) describe the same curve; report C >= 0
    if (out.params.C < 0.0) {
        out.params.C = -out.params.C;
        out.params.phi = wrap_phase(out.params.phi + std::numbers::pi);
    }
    if (!spec.free_p1()) out.params.p1 = 0.0;
    if (!spec.free_gamma()) out.params.gamma = 1.0;
    const ModelSpec price_spec = spec.id() == ModelId::M0prime ? ModelSpec(ModelId::M0) : spec;
    out.residuals = residuals(price_spec, out.params, series);
    out.cost = 0.0;
    for (double v : out.residuals.values) out.cost += v * v;
    out.rms = out.residuals.rms;
    out.objective = best.objective;
    out.flags = check_bubble_conditions(out.params);
    out.boundary_ok = boundary_ok(spec, out.params, bounds);
    out.bounds = bounds;
    out.condition = best.condition;
    return out;
}

inline bool better(const PolishResult& a, const PolishResult& b) {
    if (a.objective != b.objective) return a.objective < b.objective;
    if (a.params.t_c != b.params.t_c) return a.params.t_c < b.params.t_c;
    return a.params.m < b.params.m;
}

}  // namespace detail

/// Polishes every candidate and selects the result: among candidates away from the
/// search boundaries the smallest objective wins (ties: smaller t_c, then smaller m).
/// Without such a candidate the best raw one is returned with boundary_ok = false.
/// Throws FitFailure if every candidate is inadmissible.
[[nodiscard]] inline FitResult fit_from_candidates(ModelSpec spec, const DiscountedSeries& series,
                                                   const SearchBounds& bounds,
                                                   std::span<const LpplParams> candidates,
                                                   const FitOptions& opt = {}) {
    if (series.size() < 30)
        throw DataError("fit window has " + std::to_string(series.size()) +
                        " observations; at least 30 are required");
    bounds.validate();
    std::vector<std::optional<PolishResult>> polished(candidates.size());
    parallel_for(candidates.size(), opt.workers, [&](std::size_t i) {
        polished[i] = lm_polish(spec, candidates[i], series, bounds, opt.lm);
    });

    const PolishResult* best_ok = nullptr;
    const PolishResult* best_raw = nullptr;
    std::size_t rejected = 0;
    for (const auto& p : polished) {
        if (!p || !std::isfinite(p->objective)) {
            ++rejected;
            continue;
        }
        if (!best_raw || detail::better(*p, *best_raw)) best_raw = &*p;
        if (boundary_ok(spec, p->params, bounds) && (!best_ok || detail::better(*p, *best_ok)))
            best_ok = &*p;
    }
    if (!best_raw)
        throw FitFailure("fit " + spec.name() + ": all " + std::to_string(candidates.size()) +
                         " candidates were inadmissible (model undefined or ill-conditioned)");
    auto out = detail::make_fit_result(spec, best_ok ? *best_ok : *best_raw, series, bounds);
    out.n_starts_tried = candidates.size();
    out.n_rejected = rejected;
    out.seed = opt.seed;
    return out;
}

/// Calibrates `spec` on the window: taboo starting points plus `opt.extra_seeds`, each
/// polished by Levenberg-Marquardt, then selected by fit_from_candidates.
[[nodiscard]] inline FitResult fit(ModelSpec spec, const DiscountedSeries& series,
                                   const SearchBounds& bounds, const FitOptions& opt = {}) {
    if (series.size() < 30)
        throw DataError("fit window has " + std::to_string(series.size()) +
                        " observations; at least 30 are required");
    auto candidates = taboo_seed_points(spec, bounds, series, opt.n_starts, opt.seed,
                                        opt.grid_cells, opt.lhs_per_start);
    for (const auto& s : opt.extra_seeds) candidates.push_back(s);
    return fit_from_candidates(spec, series, bounds, candidates, opt);
}

/// M0 calibrated on log differences ln p - F_LPPL; the reported RMS stays the relative one.
[[nodiscard]] inline FitResult fit_m0_prime(const DiscountedSeries& series,
                                            const SearchBounds& bounds,
                                            const FitOptions& opt = {}) {
    return fit(ModelId::M0prime, series, bounds, opt);
}

/// Fits the nested spec `high` with the solution of `low` added (lifted) to its seeds.
[[nodiscard]] inline FitResult fit_nested(ModelSpec high, const FitResult& low,
                                          const DiscountedSeries& series,
                                          const SearchBounds& bounds, FitOptions opt = {}) {
    opt.extra_seeds.push_back(lift_params(low.spec, high, low.params, bounds));
    return fit(high, series, bounds, opt);
}

/// M0, M1, M2, M3 calibrated in nesting order: M1 and M2 start from the lifted M0 solution,
/// M3 from both the lifted M1 and M2 solutions.
struct CoreFits {
    FitResult m0, m1, m2, m3;
};

[[nodiscard]] inline CoreFits fit_core_models(const DiscountedSeries& series, const SearchBounds& bounds,
                                              const FitOptions& opt = {}) {
    CoreFits out;
    out.m0 = fit(ModelId::M0, series, bounds, opt);
    out.m1 = fit_nested(ModelId::M1, out.m0, series, bounds, opt);
    out.m2 = fit_nested(ModelId::M2, out.m0, series, bounds, opt);
    auto o3 = opt;
    o3.extra_seeds.push_back(lift_params(ModelId::M2, ModelId::M3, out.m2.params, bounds));
    out.m3 = fit_nested(ModelId::M3, out.m1, series, bounds, o3);
    return out;
}

}  // namespace jls
