#pragma once

#include "jls/calibration.hpp"
#include "jls/error.hpp"
#include "jls/parallel.hpp"
#include "jls/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace jls::stats {

/// Permutes residuals day by day (block_len <= 1) or as whole contiguous blocks of
/// `block_len` days; a trailing partial block stays in place.
[[nodiscard]] inline std::vector<double> permute_residuals(std::span<const double> r,
                                                           std::size_t block_len, Rng& rng) {
    std::vector<double> out(r.begin(), r.end());
    if (block_len <= 1) {
        rng.shuffle(std::span<double>(out));
        return out;
    }
    const std::size_t n_blocks = r.size() / block_len;
    std::vector<std::size_t> order(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t b = 0; b < n_blocks; ++b)
        std::copy_n(r.begin() + std::ptrdiff_t(order[b] * block_len), block_len,
                    out.begin() + std::ptrdiff_t(b * block_len));
    return out;
}

struct BootstrapOptions {
    std::size_t n_reps = 1000;
    std::size_t block_len = 25;
    std::uint64_t seed = 0;
    std::size_t n_starts = 50;  ///< data fits use this; replicas use max(1, n_starts / 4)
    unsigned workers = 1;
    int max_redraws = 3;
};

/// Replicas generated under one null hypothesis.
struct BootstrapNull {
    ModelSpec generator;
    std::vector<double> d_samples;  ///< cost_l - cost_h per successful replica
    double p_value = 0.0;
    std::size_t failures = 0;       ///< replicas that failed after all redraws
    std::size_t redraws = 0;
};

struct BootstrapResult {
    ModelSpec low, high;
    std::size_t n_reps = 0;
    std::size_t block_len = 1;
    double d_fit = 0.0;  ///< cost_l - cost_h on the data
    double cost_low = 0.0, cost_high = 0.0;
    BootstrapNull low_true;   ///< p = fraction of d_n > d_fit
    BootstrapNull high_true;  ///< p = fraction of d_n < d_fit
    std::uint64_t seed = 0;
    [[nodiscard]] double p_l_true() const { return low_true.p_value; }
    [[nodiscard]] double p_h_true() const { return high_true.p_value; }
};

namespace detail {

inline LpplParams perturb(ModelSpec spec, const LpplParams& p, const SearchBounds& b, Rng& rng) {
    LpplParams q = p;
    auto jitter = [&](double v, double lo, double hi) {
        return std::clamp(v * (1.0 + 0.05 * rng.uniform(-1.0, 1.0)), lo, hi);
    };
    q.t_c = jitter(p.t_c, b.tc_lo, b.tc_hi);
    q.m = jitter(p.m, b.m_lo, b.m_hi);
    q.omega = jitter(p.omega, b.omega_lo, b.omega_hi);
    q.phi = wrap_phase(p.phi + 0.3 * rng.uniform(-1.0, 1.0));
    if (spec.free_p1()) q.p1 = jitter(p.p1, b.p1_lo, b.p1_hi);
    if (spec.free_gamma()) q.gamma = jitter(p.gamma, b.gamma_lo, b.gamma_hi);
    return q;
}

// Seeds near the generating parameters: the given anchors, then jittered copies of them.
inline std::vector<LpplParams> replica_seeds(ModelSpec spec, std::vector<LpplParams> anchors,
                                             std::size_t count, const SearchBounds& b, Rng& rng) {
    std::vector<LpplParams> out = anchors;
    for (std::size_t i = 0; out.size() < std::max(count, anchors.size()); ++i)
        out.push_back(perturb(spec, anchors[i % anchors.size()], b, rng));
    return out;
}

inline SearchBounds rebound(const SearchBounds& base, const DiscountedSeries& s) {
    SearchBounds b = base;
    const auto fresh = SearchBounds::for_series(s);
    b.p1_lo = fresh.p1_lo;
    b.p1_hi = fresh.p1_hi;
    return b;
}

}  // namespace detail

/// Residual-reshuffling bootstrap for a nested pair, given the fits on the data.
/// Under each null the generating fit's curve is multiplied by (1 + permuted residuals),
/// both specs are refit on every synthetic series, and d_n = cost_l - cost_h.
/// Replica streams derive from (seed, null, index), so the result does not depend
/// on the worker count.
[[nodiscard]] inline BootstrapResult bootstrap_compare(const FitResult& fit_l,
                                                       const FitResult& fit_h,
                                                       const DiscountedSeries& series,
                                                       const BootstrapOptions& opt) {
    if (opt.n_reps < 1) throw ConfigError("bootstrap: n_reps must be >= 1");
    if (!fit_l.spec.nested_in(fit_h.spec))
        throw DomainError("bootstrap: " + fit_l.spec.name() + " is not nested in " +
                          fit_h.spec.name());
    if (fit_l.residuals.values.size() != series.size() ||
        fit_h.residuals.values.size() != series.size())
        throw DomainError("bootstrap: fits do not match the series window");

    BootstrapResult out;
    out.low = fit_l.spec;
    out.high = fit_h.spec;
    out.n_reps = opt.n_reps;
    out.block_len = std::max<std::size_t>(1, opt.block_len);
    out.seed = opt.seed;
    out.cost_low = fit_l.cost;
    out.cost_high = fit_h.cost;
    out.d_fit = fit_l.cost - fit_h.cost;
    const std::size_t rep_starts = std::max<std::size_t>(1, opt.n_starts / 4);
    const ModelSpec low = fit_l.spec, high = fit_h.spec;

    auto run_null = [&](const FitResult& gen, std::uint64_t null_id) {
        BootstrapNull null;
        null.generator = gen.spec;
        std::vector<double> curve(series.size());
        for (std::size_t i = 0; i < series.size(); ++i)
            curve[i] = model_price(gen.spec, gen.params, series.t_index[i]);

        struct Replica {
            std::optional<double> d;
            std::size_t redraws = 0;
        };
        std::vector<Replica> reps(opt.n_reps);
        parallel_for(opt.n_reps, opt.workers, [&](std::size_t rep) {
            Rng rng(derive_seed(opt.seed, (null_id << 40) + rep));
            for (int attempt = 0; attempt <= opt.max_redraws; ++attempt) {
                const auto shuffled = permute_residuals(gen.residuals.values, out.block_len, rng);
                DiscountedSeries syn = series;
                bool positive = true;
                for (std::size_t i = 0; i < syn.size(); ++i) {
                    syn.values[i] = curve[i] * (1.0 + shuffled[i]);
                    positive = positive && syn.values[i] > 0.0;
                }
                if (positive) {
                    try {
                        const auto b = detail::rebound(fit_l.bounds, syn);
                        FitOptions fo;
                        fo.seed = rng.below(~std::uint32_t{0});
                        const auto seeds_l = detail::replica_seeds(low, {fit_l.params}, rep_starts, b, rng);
                        const auto fl = fit_from_candidates(low, syn, b, seeds_l, fo);
                        auto seeds_h = detail::replica_seeds(
                            high, {fit_h.params, lift_params(low, high, fl.params, b)}, rep_starts, b, rng);
                        const auto fh = fit_from_candidates(high, syn, b, seeds_h, fo);
                        const double d = fl.cost - fh.cost;
                        if (std::isfinite(d)) {
                            reps[rep].d = d;
                            return;
                        }
                    } catch (const Error&) {
                        // fall through to a redraw
                    }
                }
                if (attempt < opt.max_redraws) ++reps[rep].redraws;
            }
        });
        std::size_t exceed = 0;
        for (const auto& r : reps) {
            null.redraws += r.redraws;
            if (!r.d) {
                ++null.failures;
                continue;
            }
            null.d_samples.push_back(*r.d);
            const bool hit = null_id == 0 ? *r.d > out.d_fit : *r.d < out.d_fit;
            if (hit) ++exceed;
        }
        null.p_value = null.d_samples.empty() ? std::nan("")
                                              : double(exceed) / double(null.d_samples.size());
        return null;
    };

    out.low_true = run_null(fit_l, 0);
    out.high_true = run_null(fit_h, 1);
    return out;
}

/// Fits both specs on the data (M_h seeded with the M_l optimum) and runs the bootstrap.
[[nodiscard]] inline BootstrapResult bootstrap_compare(ModelSpec spec_l, ModelSpec spec_h,
                                                       const DiscountedSeries& series,
                                                       const SearchBounds& bounds,
                                                       const BootstrapOptions& opt) {
    if (opt.n_reps < 1) throw ConfigError("bootstrap: n_reps must be >= 1");
    if (!spec_l.nested_in(spec_h))
        throw DomainError("bootstrap: " + spec_l.name() + " is not nested in " + spec_h.name());
    FitOptions fo;
    fo.n_starts = opt.n_starts;
    fo.seed = opt.seed;
    fo.workers = opt.workers;
    const auto fl = fit(spec_l, series, bounds, fo);
    const auto fh = fit_nested(spec_h, fl, series, bounds, fo);
    return bootstrap_compare(fl, fh, series, opt);
}

}  // namespace jls::stats
