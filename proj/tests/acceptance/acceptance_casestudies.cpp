// Case-study acceptance on real index data. Prints one PASS/FAIL/SKIP line per criterion.
// Exit status: 0 all pass, 1 any failure, 77 when the data directory is incomplete.
#include "jls/analytics.hpp"
#include "jls/calibration.hpp"
#include "jls/stats.hpp"
#include "jls/timeseries.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

using namespace jls;
namespace fs = std::filesystem;

namespace {

struct Target {
    double m, omega, rms;
    const char* t_c;
};

struct Case {
    const char* name;
    const char* t1;
    const char* t2;
    Target m0;
    const char* scan_from;
    const char* scan_to;
    std::size_t scan_length;
};

const Case kCases[] = {
    {"HSI", "1995-02-01", "1997-03-13", {0.19, 6.97, 0.0320, "1997-07-27"}, "1987-01-01", "2010-02-25", 550},
    {"GSPC", "1986-09-01", "1987-08-26", {0.70, 6.62, 0.0196, "1987-09-13"}, "1954-02-02", "2010-02-10", 250},
    {"SSEC", "2008-10-24", "2009-07-10", {0.63, 16.60, 0.0258, "2009-07-29"}, "1997-08-03", "2010-01-22", 175},
};

const char* kCriteria[] = {"calibration", "wilks", "bootstrap", "census"};

struct Config {
    std::string data;
    std::size_t n_starts = 50;
    std::size_t boot_starts = 8;
    std::size_t n_reps = 1000;
    std::size_t census_starts = 10;
    std::size_t workers = 1;
    std::uint64_t seed = 1;
    bool fast = false;
    bool skip_bootstrap = false;
    bool skip_census = false;
};

int failures = 0;

void line(bool pass, const std::string& name, const std::string& detail) {
    std::printf("%s  %-34s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !pass;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

PriceSeries slice(const PriceSeries& p, Date from, Date to) {
    PriceSeries out;
    out.label = p.label;
    for (std::size_t i = p.lower_index(from); i < p.size() && p.dates[i] <= to; ++i) {
        out.dates.push_back(p.dates[i]);
        out.values.push_back(p.values[i]);
    }
    return out;
}

FitOptions fit_opts(const Config& cfg, std::size_t n_starts) {
    FitOptions o;
    o.n_starts = n_starts;
    o.seed = cfg.seed;
    o.workers = cfg.workers;
    return o;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void calibration(const Case& c, const PriceSeries& prices, const DiscountedSeries& s, const FitResult& f,
                 double secs) {
    const std::size_t i1 = prices.lower_index(s.dates.front());
    const double tc_table = double(prices.lower_index(Date::parse(c.m0.t_c))) - double(i1);
    const double dtc = f.params.t_c - tc_table;
    const double dm = f.params.m - c.m0.m, dw = f.params.omega - c.m0.omega;
    const double drms = f.rms / c.m0.rms - 1.0;
    const bool ok = std::abs(dtc) <= 10.0 && std::abs(dm) <= 0.10 && std::abs(dw) <= 1.0 &&
                    std::abs(drms) <= 0.15 && secs <= 300.0;
    line(ok, std::string("calibration ") + c.name + " M0",
         fmt("dt_c %+.1f days, m %.3f, omega %.2f, ", dtc, f.params.m, f.params.omega) +
             fmt("RMS %.4f (%+.1f%%), %.0fs", f.rms, 100.0 * drms, secs));
}

void wilks(const Case& c, const CoreFits& fits) {
    using P = std::pair<const FitResult*, const FitResult*>;
    const std::vector<std::pair<std::string, P>> pairs{{"(M0,M1)", {&fits.m0, &fits.m1}},
                                                       {"(M0,M2)", {&fits.m0, &fits.m2}},
                                                       {"(M1,M3)", {&fits.m1, &fits.m3}},
                                                       {"(M2,M3)", {&fits.m2, &fits.m3}},
                                                       {"(M0,M3)", {&fits.m0, &fits.m3}}};
    const std::string name = c.name;
    for (const auto& [label, pr] : pairs) {
        const double p = stats::wilks_test(*pr.first, *pr.second).p_value;
        if (name == "HSI") line(p >= 0.10, "wilks HSI " + label, fmt("p = %.4f, need >= 0.10", p));
        if (name == "GSPC" && (label == "(M0,M1)" || label == "(M0,M2)"))
            line(p <= 0.01, "wilks GSPC " + label, fmt("p = %.4f, need <= 0.01", p));
        if (name == "SSEC" && label == "(M0,M3)") line(p <= 0.15, "wilks SSEC " + label, fmt("p = %.4f, need <= 0.15", p));
    }
}

void bootstrap(const Case& c, const DiscountedSeries& s, const Config& cfg) {
    const std::string name = c.name;
    ModelSpec high = ModelId::M1;
    std::size_t block = 25;
    double lo = 0.0, hi = 0.10;
    if (name == "HSI") lo = 0.31, hi = 0.61;
    if (name == "GSPC") block = 1;
    if (name == "SSEC") high = ModelId::M3, hi = 0.15;
    stats::BootstrapOptions o;
    o.n_reps = cfg.fast ? 100 : cfg.n_reps;
    o.block_len = block;
    o.seed = cfg.seed;
    o.n_starts = cfg.boot_starts;
    o.workers = cfg.workers;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = stats::bootstrap_compare(ModelId::M0, high, s, SearchBounds::for_series(s), o);
    const double p = r.p_l_true(), secs = seconds_since(t0);
    line(p >= lo && p <= hi && secs <= 7200.0,
         "bootstrap " + name + " (M0," + std::string(high.name()) + ") b" + std::to_string(block),
         fmt("p_l_true = %.3f, need [%.2f, %.2f], ", p, lo, hi) +
             fmt("%.0f reps, %.0fs", double(r.low_true.d_samples.size()), secs));
}

void census(const Case& c, const PriceSeries& prices, const RateSeries& rates, const Config& cfg) {
    const auto sub = slice(prices, Date::parse(c.scan_from), Date::parse(c.scan_to));
    for (ModelSpec spec : kCoreModels) {
        ScanOptions o;
        o.length = c.scan_length;
        o.step = 25;
        o.fit = fit_opts(cfg, cfg.census_starts);
        const auto k = rolling_scan(sub, rates, spec, o);
        const bool overall = k.frac_pp() > 0.85 && k.frac_df() > 0.85;
        const bool subset = k.n_lppl > 0 && k.frac_lppl_pp() >= k.frac_pp() && k.frac_lppl_df() >= k.frac_df();
        line(overall && subset, std::string("census ") + c.name + " " + spec.name(),
             fmt("%.0f windows, PP %.1f%%, DF %.1f%%, ", double(k.n_fitted), 100.0 * k.frac_pp(), 100.0 * k.frac_df()) +
                 fmt("LPPL %.1f%% with PP %.1f%%, DF %.1f%%", 100.0 * k.p_lppl(), 100.0 * k.frac_lppl_pp(),
                     100.0 * k.frac_lppl_df()));
    }
}

}  // namespace

int main(int argc, char** argv) {
    Config cfg;
    CLI::App app{"Case-study acceptance checks on real index data"};
    app.add_option("--data", cfg.data, "directory holding HSI.csv, GSPC.csv, SSEC.csv and DTB3.csv")->required();
    app.add_option("--n-starts", cfg.n_starts, "starting points per case-study fit");
    app.add_option("--boot-starts", cfg.boot_starts, "starting points per bootstrap data fit");
    app.add_option("--n-reps", cfg.n_reps, "bootstrap replicas");
    app.add_option("--census-starts", cfg.census_starts, "starting points per census window");
    app.add_option("--workers", cfg.workers, "worker threads");
    app.add_option("--seed", cfg.seed, "master seed");
    app.add_flag("--fast", cfg.fast, "100 bootstrap replicas");
    app.add_flag("--skip-bootstrap", cfg.skip_bootstrap);
    app.add_flag("--skip-census", cfg.skip_census);
    CLI11_PARSE(app, argc, argv);

    const fs::path dir(cfg.data);
    std::vector<std::string> missing;
    for (const char* f : {"HSI.csv", "GSPC.csv", "SSEC.csv", "DTB3.csv"})
        if (!fs::exists(dir / f)) missing.push_back(f);
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        for (const char* c : kCriteria)
            std::printf("SKIP  %-34s missing %s in %s (run data/fetch_data.sh)\n", c, list.c_str(), cfg.data.c_str());
        return 77;
    }

    try {
        CsvOptions csv;
        csv.has_header = true;
        const auto rates = load_rate_csv((dir / "DTB3.csv").string(), RateUnits::Percent, csv);
        for (const auto& c : kCases) {
            const auto prices = load_price_csv((dir / (std::string(c.name) + ".csv")).string(), csv);
            const auto s = discount(prices, rates, Date::parse(c.t1), Date::parse(c.t2));
            const auto bounds = SearchBounds::for_series(s);

            const auto t0 = std::chrono::steady_clock::now();
            const auto f0 = fit(ModelId::M0, s, bounds, fit_opts(cfg, cfg.n_starts));
            calibration(c, prices, s, f0, seconds_since(t0));

            wilks(c, fit_core_models(s, bounds, fit_opts(cfg, cfg.n_starts)));
            if (!cfg.skip_bootstrap) bootstrap(c, s, cfg);
            if (!cfg.skip_census) census(c, prices, rates, cfg);
        }
    } catch (const std::exception& e) {
        std::printf("FAIL  %-34s %s\n", "data", e.what());
        return 1;
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
