#pragma once

#include "jls/calibration.hpp"
#include "jls/date.hpp"
#include "jls/error.hpp"
#include "jls/lppl.hpp"
#include "jls/parallel.hpp"
#include "jls/random.hpp"
#include "jls/stats/unit_root.hpp"
#include "jls/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace jls {

/// Maps a real-valued trading-day index of a window to a calendar date, rounding up to
/// the next trading day. Indices past the window end are extrapolated over weekdays.
[[nodiscard]] inline Date trading_date_at(const std::vector<Date>& dates, double index) {
    if (dates.empty()) throw DataError("trading_date_at: empty calendar");
    if (!std::isfinite(index)) throw DomainError("trading_date_at: non-finite index");
    const double up = std::ceil(index - 1e-9);
    if (up <= 0.0) return dates.front();
    const auto last = double(dates.size() - 1);
    if (up <= last) return dates[std::size_t(up)];
    Date d = dates.back();
    for (long k = 0; k < long(up - last); ++k) d = next_weekday(d);
    return d;
}

struct CrashOptions {
    int valley_horizon_months = 12;  ///< DD_max looks this far past the peak (at least 2)
    int peak_slack_months = 1;       ///< the peak is searched up to t_c + this many months
};

struct CrashMetrics {
    Date t_c_date;
    Date t_p;
    double p_peak = 0.0;
    double dd_2months = 0.0;
    double dd_max = 0.0;
    Date valley_date;
    double rc_2months = 0.0;
    double rc_max = 0.0;
    double overvalued = 0.0;            ///< denominator: p_obs(t_p) - compounded p1
    std::optional<double> kappa;        ///< equals RC_2months for gamma = 1 specs
    std::optional<double> fundamental_at_peak;  ///< p_f(t_p) / p(t_p), specs with free p1
    long tc_minus_tp_days = 0;          ///< |t_c - t_p| in trading days
};

/// Crash size measured on observed (undiscounted) prices. The window [t1, t2] is the one
/// the fit was calibrated on.
[[nodiscard]] inline CrashMetrics crash_metrics(const PriceSeries& prices, const RateSeries& rates,
                                                const FitResult& fit, Date t1, Date t2,
                                                const CrashOptions& opt = {}) {
    prices.validate();
    const std::size_t i1 = prices.lower_index(t1);
    const std::size_t i2 = prices.lower_index(t2);
    if (i1 >= prices.size() || prices.dates[i1] != t1 || i2 >= prices.size() || prices.dates[i2] != t2)
        throw DataError("crash_metrics: window dates are not trading days of the price series");
    std::vector<Date> window(prices.dates.begin() + std::ptrdiff_t(i1),
                             prices.dates.begin() + std::ptrdiff_t(i2) + 1);

    CrashMetrics out;
    out.t_c_date = trading_date_at(window, fit.params.t_c);
    const Date peak_end = out.t_c_date.plus_months(opt.peak_slack_months);
    std::size_t ip = i1;
    for (std::size_t i = i1; i < prices.size() && prices.dates[i] <= peak_end; ++i)
        if (prices.values[i] > prices.values[ip]) ip = i;
    out.t_p = prices.dates[ip];
    out.p_peak = prices.values[ip];

    const Date two_months = out.t_p.plus_months(2);
    if (prices.dates.back() < two_months)
        throw DataError("crash_metrics: insufficient post-peak data (need prices through " +
                        two_months.iso() + ")");
    const Date horizon = out.t_p.plus_months(std::max(opt.valley_horizon_months, 2));
    double min2 = out.p_peak, minmax = out.p_peak;
    out.valley_date = out.t_p;
    for (std::size_t i = ip + 1; i < prices.size() && prices.dates[i] <= horizon; ++i) {
        const double v = prices.values[i];
        if (prices.dates[i] <= two_months) min2 = std::min(min2, v);
        if (v < minmax) {
            minmax = v;
            out.valley_date = prices.dates[i];
        }
    }
    out.dd_2months = out.p_peak - min2;
    out.dd_max = out.p_peak - minmax;

    const double p1 = effective_p1(fit.spec, fit.params);
    const double p1_at_peak = p1 / discount_factor(rates, t1, out.t_p);
    out.overvalued = out.p_peak - p1_at_peak;
    if (!(out.overvalued > 0.0))
        throw DomainError("crash_metrics: fundamental value exceeds the peak price");
    out.rc_2months = out.dd_2months / out.overvalued;
    out.rc_max = out.dd_max / out.overvalued;
    if (is_unit_gamma(effective_gamma(fit.spec, fit.params))) out.kappa = out.rc_2months;
    if (fit.spec.free_p1()) out.fundamental_at_peak = p1_at_peak / out.p_peak;

    // trading-day distance, counted on the price calendar where it is available
    const auto tc_idx = std::lower_bound(prices.dates.begin(), prices.dates.end(), out.t_c_date) -
                        prices.dates.begin();
    out.tc_minus_tp_days = std::labs(long(tc_idx) - long(ip));
    return out;
}

/// Fundamental fraction p1 / p(at) in the discounted frame, or nullopt when the spec has no p1.
[[nodiscard]] inline std::optional<double> bubble_fraction(const FitResult& fit,
                                                           const DiscountedSeries& series, Date at) {
    if (!fit.spec.free_p1()) return std::nullopt;
    const auto it = std::lower_bound(series.dates.begin(), series.dates.end(), at);
    if (it == series.dates.end() || *it != at)
        throw DomainError("bubble_fraction: " + at.iso() + " is not a date of the window");
    return fit.params.p1 / series.values[std::size_t(it - series.dates.begin())];
}

struct ScanOptions {
    std::size_t length = 550;
    std::size_t step = 25;
    std::size_t offset = 0;  ///< first window starts at this trading-day index
    FitOptions fit;          ///< fit.seed is the master seed; each window derives its own
    double level = 0.99;
};

struct ScanWindow {
    std::size_t index = 0;
    Date t1, t2;
    std::optional<FitResult> fit;
    std::string error;
    stats::StationarityResult stationarity;
    bool lppl = false;
};

struct ScanCensus {
    ModelSpec spec;
    std::vector<ScanWindow> windows;
    std::size_t n_windows = 0, n_failed = 0, n_fitted = 0;
    std::size_t n_pp = 0, n_df = 0;  ///< stationary counts
    std::size_t n_lppl = 0, n_lppl_pp = 0, n_lppl_df = 0;

    [[nodiscard]] static double ratio(std::size_t a, std::size_t b) {
        return b == 0 ? std::nan("") : double(a) / double(b);
    }
    [[nodiscard]] double frac_pp() const { return ratio(n_pp, n_fitted); }
    [[nodiscard]] double frac_df() const { return ratio(n_df, n_fitted); }
    [[nodiscard]] double p_lppl() const { return ratio(n_lppl, n_fitted); }
    [[nodiscard]] double frac_lppl_pp() const { return ratio(n_lppl_pp, n_lppl); }
    [[nodiscard]] double frac_lppl_df() const { return ratio(n_lppl_df, n_lppl); }
};

/// Recounts the census from its per-window records.
inline void tally(ScanCensus& c) {
    c.n_windows = c.windows.size();
    c.n_failed = c.n_fitted = c.n_pp = c.n_df = c.n_lppl = c.n_lppl_pp = c.n_lppl_df = 0;
    for (const auto& w : c.windows) {
        if (!w.fit) {
            ++c.n_failed;
            continue;
        }
        ++c.n_fitted;
        const bool pp = w.stationarity.pp.stationary, df = w.stationarity.df.stationary;
        c.n_pp += pp;
        c.n_df += df;
        if (w.lppl) {
            ++c.n_lppl;
            c.n_lppl_pp += pp;
            c.n_lppl_df += df;
        }
    }
}

/// Fits `spec` on every rolling window, tests the residuals for a unit root and records the
/// LPPL conditions. `on_window` (optional) receives each window in index order as soon as
/// it and all earlier windows are done.
[[nodiscard]] inline ScanCensus rolling_scan(const PriceSeries& prices, const RateSeries& rates,
                                             ModelSpec spec, const ScanOptions& opt,
                                             const std::function<void(const ScanWindow&)>& on_window = {}) {
    const auto wins = rolling_windows(prices, opt.length, opt.step, opt.offset);
    ScanCensus census;
    census.spec = spec;
    census.windows.resize(wins.size());
    const std::size_t chunk = std::max<std::size_t>(1, opt.fit.workers) * 4;
    for (std::size_t lo = 0; lo < wins.size(); lo += chunk) {
        const std::size_t hi = std::min(wins.size(), lo + chunk);
        parallel_for(hi - lo, opt.fit.workers, [&](std::size_t k) {
            const std::size_t i = lo + k;
            auto& w = census.windows[i];
            w.index = i;
            w.t1 = wins[i].t1;
            w.t2 = wins[i].t2;
            try {
                const auto series = discount(prices, rates, w.t1, w.t2);
                FitOptions fo = opt.fit;
                fo.workers = 1;
                fo.seed = derive_seed(opt.fit.seed, i);
                auto f = fit(spec, series, SearchBounds::for_series(series), fo);
                w.stationarity = stats::stationarity(f.residuals.values, opt.level);
                w.lppl = f.flags.lppl_conditions;
                w.fit = std::move(f);
            } catch (const Error& e) {
                w.error = e.what();
            }
        });
        if (on_window)
            for (std::size_t i = lo; i < hi; ++i) on_window(census.windows[i]);
    }
    tally(census);
    return census;
}

}  // namespace jls
