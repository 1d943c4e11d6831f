// jls: calibrate generalized JLS bubble models and compare them.

#include "jls/jls.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using jls::report::json;

namespace {

struct Common {
    std::string prices;
    std::string rates;
    std::string rate_units = "percent";
    bool header = false;
    std::string t1, t2;
    std::string label;
    std::uint64_t seed = 0;
    std::size_t n_starts = 50;
    unsigned workers = 1;
    std::string out = ".";
    bool no_timestamp = false;
};

void add_input(CLI::App* app, Common& c, bool window) {
    app->add_option("--prices", c.prices, "price CSV (ISO date, price)")->required();
    app->add_option("--rates", c.rates, "risk-free rate CSV (ISO date, annualized rate); zero rate if omitted");
    app->add_option("--rate-units", c.rate_units, "percent or decimal")
        ->check(CLI::IsMember({"percent", "decimal"}));
    app->add_flag("--header", c.header, "CSV files start with a header row");
    if (window) {
        app->add_option("--t1", c.t1, "window start date (YYYY-MM-DD); default first date");
        app->add_option("--t2", c.t2, "window end date (YYYY-MM-DD); default last date");
    }
    app->add_option("--label", c.label, "series label used in reports");
    app->add_option("--seed", c.seed, "master seed")->required();
    app->add_option("--n-starts", c.n_starts, "taboo starting points per fit")->check(CLI::PositiveNumber);
    app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", c.out, "output directory");
    app->add_flag("--no-timestamp", c.no_timestamp, "omit metadata.generated_at");
}

struct Inputs {
    jls::PriceSeries prices;
    jls::RateSeries rates;
    std::string hash;
    bool zero_rates = false;
};

Inputs load(const Common& c) {
    Inputs in;
    jls::CsvOptions opt;
    opt.has_header = c.header;
    if (!fs::exists(c.prices)) throw jls::DataError("price file not found: " + c.prices);
    in.prices = jls::load_price_csv(c.prices, opt);
    if (!c.label.empty()) in.prices.label = c.label;
    std::vector<std::string> files{c.prices};
    if (c.rates.empty()) {
        in.rates = jls::RateSeries::constant(in.prices.dates.front(), 0.0);
        in.zero_rates = true;
    } else {
        if (!fs::exists(c.rates)) throw jls::DataError("rate file not found: " + c.rates);
        in.rates = jls::load_rate_csv(
            c.rates, c.rate_units == "decimal" ? jls::RateUnits::Decimal : jls::RateUnits::Percent, opt);
        files.push_back(c.rates);
    }
    in.hash = jls::report::hash_inputs(files);
    return in;
}

jls::Date window_start(const Common& c, const Inputs& in) {
    return c.t1.empty() ? in.prices.dates.front() : jls::Date::parse(c.t1);
}
jls::Date window_end(const Common& c, const Inputs& in) {
    return c.t2.empty() ? in.prices.dates.back() : jls::Date::parse(c.t2);
}

jls::FitOptions fit_options(const Common& c) {
    jls::FitOptions fo;
    fo.n_starts = c.n_starts;
    fo.seed = c.seed;
    fo.workers = c.workers;
    return fo;
}

json common_json(const Common& c) {
    return json{{"prices", fs::path(c.prices).filename().string()},
                {"rates", c.rates.empty() ? "" : fs::path(c.rates).filename().string()},
                {"rate_units", c.rate_units},
                {"t1", c.t1},
                {"t2", c.t2},
                {"label", c.label},
                {"seed", c.seed},
                {"n_starts", c.n_starts}};
}

std::string config_hash(const json& cfg) { return jls::report::hex64(jls::report::fnv1a(cfg.dump())); }

fs::path out_dir(const Common& c) {
    fs::path p(c.out);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw jls::ConfigError("cannot create output directory " + c.out + ": " + ec.message());
    return p;
}

void emit(const Common& c, const fs::path& file, std::string_view kind, const std::string& input_hash,
          const json& cfg, json result) {
    auto doc = jls::report::envelope(kind, c.seed, input_hash, config_hash(cfg), std::move(result),
                                     !c.no_timestamp);
    doc["config"] = cfg;
    jls::report::write_json(file.string(), doc);
    std::cout << "wrote " << file.string() << '\n';
}

std::string label_of(const Common& c, const Inputs& in) {
    return !c.label.empty() ? c.label : (!in.prices.label.empty() ? in.prices.label : fs::path(c.prices).stem().string());
}

// ---------------------------------------------------------------- fit

struct FitCmd {
    Common c;
    std::string spec = "M0";
    bool crash = false;
    int horizon = 12;
};

int run_fit(const FitCmd& f) {
    const auto in = load(f.c);
    const auto spec = jls::ModelSpec::parse(f.spec);
    const auto t1 = window_start(f.c, in), t2 = window_end(f.c, in);
    const auto series = jls::discount(in.prices, in.rates, t1, t2);
    const auto bounds = jls::SearchBounds::for_series(series);
    const auto result = jls::fit(spec, series, bounds, fit_options(f.c));

    json r{{"label", label_of(f.c, in)}, {"zero_rates", in.zero_rates}, {"fit", jls::report::to_json(result, &series)}};
    if (f.crash) {
        jls::CrashOptions co;
        co.valley_horizon_months = f.horizon;
        r["crash"] = jls::report::to_json(
            jls::crash_metrics(in.prices, in.rates, result, series.dates.front(), series.dates.back(), co));
    }
    auto cfg = common_json(f.c);
    cfg["spec"] = spec.name();
    cfg["crash"] = f.crash;
    cfg["horizon_months"] = f.horizon;
    const auto dir = out_dir(f.c);
    const auto stem = "fit_" + spec.name();
    jls::report::write_text((dir / ("residuals_" + spec.name() + ".csv")).string(),
                            jls::report::residuals_csv(result, series));
    jls::report::write_text((dir / ("curve_" + spec.name() + ".csv")).string(),
                            jls::report::curve_csv(result, series));
    emit(f.c, dir / (stem + ".json"), "fit", in.hash, cfg, std::move(r));
    return 0;
}

// ---------------------------------------------------------------- compare

int run_compare(const Common& c) {
    const auto in = load(c);
    const auto series = jls::discount(in.prices, in.rates, window_start(c, in), window_end(c, in));
    const auto bounds = jls::SearchBounds::for_series(series);
    const auto fits_all = jls::fit_core_models(series, bounds, fit_options(c));
    const auto& [f0, f1, f2, f3] = fits_all;

    const std::vector<std::pair<const jls::FitResult*, const jls::FitResult*>> pairs{
        {&f0, &f1}, {&f0, &f2}, {&f1, &f3}, {&f2, &f3}, {&f0, &f3}};
    json wilks = json::array();
    for (const auto& [l, h] : pairs) wilks.push_back(jls::report::to_json(jls::stats::wilks_test(*l, *h)));
    json fits = json::array();
    for (const auto* f : {&f0, &f1, &f2, &f3}) fits.push_back(jls::report::to_json(*f, &series));
    json r{{"label", label_of(c, in)}, {"wilks", std::move(wilks)}, {"fits", std::move(fits)}};
    const auto cfg = common_json(c);
    emit(c, out_dir(c) / "compare.json", "compare", in.hash, cfg, std::move(r));
    return 0;
}

// ---------------------------------------------------------------- bootstrap

struct BootCmd {
    Common c;
    std::string low = "M0", high = "M1";
    std::size_t n_reps = 1000;
    std::size_t block_len = 25;
};

int run_bootstrap(const BootCmd& b) {
    const auto in = load(b.c);
    const auto series = jls::discount(in.prices, in.rates, window_start(b.c, in), window_end(b.c, in));
    const auto bounds = jls::SearchBounds::for_series(series);
    jls::stats::BootstrapOptions opt;
    opt.n_reps = b.n_reps;
    opt.block_len = b.block_len;
    opt.seed = b.c.seed;
    opt.n_starts = b.c.n_starts;
    opt.workers = b.c.workers;
    const auto res = jls::stats::bootstrap_compare(jls::ModelSpec::parse(b.low), jls::ModelSpec::parse(b.high),
                                                   series, bounds, opt);
    auto r = jls::report::to_json(res);
    r["label"] = label_of(b.c, in);
    auto cfg = common_json(b.c);
    cfg["low"] = res.low.name();
    cfg["high"] = res.high.name();
    cfg["n_reps"] = b.n_reps;
    cfg["block_len"] = b.block_len;
    const auto name = "bootstrap_" + res.low.name() + "_" + res.high.name() + "_b" +
                      std::to_string(res.block_len) + ".json";
    emit(b.c, out_dir(b.c) / name, "bootstrap", in.hash, cfg, std::move(r));
    return 0;
}

// ---------------------------------------------------------------- scan

struct ScanCmd {
    Common c;
    std::string spec = "M0";
    std::size_t length = 550, step = 25, offset = 0;
};

int run_scan(const ScanCmd& s) {
    const auto in = load(s.c);
    const auto spec = jls::ModelSpec::parse(s.spec);
    jls::ScanOptions opt;
    opt.length = s.length;
    opt.step = s.step;
    opt.offset = s.offset;
    opt.fit = fit_options(s.c);
    const auto dir = out_dir(s.c);
    const auto csv_path = dir / ("scan_" + spec.name() + ".csv");
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw jls::DataError("cannot write file: " + csv_path.string());
    csv << jls::report::scan_csv_header() << std::flush;
    const auto census = jls::rolling_scan(in.prices, in.rates, spec, opt, [&](const jls::ScanWindow& w) {
        csv << jls::report::scan_csv_row(w) << std::flush;
    });
    csv.close();
    std::cout << "wrote " << csv_path.string() << '\n';

    json failures = json::array();
    for (const auto& w : census.windows)
        if (!w.fit) failures.push_back({{"t1", w.t1.iso()}, {"t2", w.t2.iso()}, {"error", w.error}});
    json r{{"label", label_of(s.c, in)}, {"summary", jls::report::census_summary(census)}, {"failures", std::move(failures)}};
    auto cfg = common_json(s.c);
    cfg["spec"] = spec.name();
    cfg["length"] = s.length;
    cfg["step"] = s.step;
    cfg["offset"] = s.offset;
    emit(s.c, dir / ("scan_" + spec.name() + ".json"), "scan", in.hash, cfg, std::move(r));
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimCmd {
    std::string spec = "M0";
    jls::LpplParams p;
    double kappa = 1.0, sigma = 0.0;
    std::size_t n_days = 250;
    std::uint64_t seed = 0;
    std::string mode = "curve";
    std::string start = "2000-01-03";
    std::string out = ".";
    std::string name = "sim";
    bool no_timestamp = false;
};

int run_simulate(const SimCmd& s) {
    jls::SimConfig cfg;
    cfg.spec = jls::ModelSpec::parse(s.spec);
    cfg.params = s.p;
    cfg.kappa = s.kappa;
    cfg.sigma = s.sigma;
    cfg.n_days = s.n_days;
    cfg.seed = s.seed;
    cfg.mode = s.mode == "curve" ? jls::SimMode::DeterministicCurve : jls::SimMode::FullStochastic;
    const auto path = jls::simulate(cfg);

    fs::path dir(s.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw jls::ConfigError("cannot create output directory " + s.out + ": " + ec.message());
    std::string csv;
    jls::Date d = jls::Date::parse(s.start);
    if (d.is_weekend()) d = jls::next_weekday(d);
    for (std::size_t i = 0; i < path.prices.size(); ++i) {
        csv += d.iso() + "," + jls::report::fmt(path.prices[i], 17) + "\n";
        d = jls::next_weekday(d);
    }
    const auto csv_path = dir / (s.name + ".csv");
    jls::report::write_text(csv_path.string(), csv);
    std::cout << "wrote " << csv_path.string() << '\n';

    json conf{{"spec", cfg.spec.name()}, {"params", jls::report::to_json(s.p)}, {"kappa", s.kappa},
              {"sigma", s.sigma},         {"n_days", s.n_days},                  {"seed", s.seed},
              {"mode", s.mode},           {"start", s.start}};
    json r{{"n_prices", path.prices.size()}, {"jumped", path.jumped}};
    r["crash_day"] = path.crash_day ? json(*path.crash_day) : json(nullptr);
    auto doc = jls::report::envelope("simulate", s.seed, jls::report::hex64(jls::report::fnv1a(csv)),
                                     config_hash(conf), std::move(r), !s.no_timestamp);
    doc["config"] = conf;
    jls::report::write_json((dir / (s.name + ".json")).string(), doc);
    std::cout << "wrote " << (dir / (s.name + ".json")).string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- report

int run_report(const std::string& in_dir, const std::string& out_file) {
    if (!fs::is_directory(in_dir)) throw jls::DataError("report input directory not found: " + in_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<json> docs;
    for (const auto& f : files) {
        try {
            docs.push_back(json::parse(jls::report::read_file(f.string())));
        } catch (const json::exception& e) {
            throw jls::DataError("malformed report " + f.string() + ": " + e.what());
        }
    }
    const auto md = jls::report::render_markdown(docs);
    if (out_file.empty()) {
        std::cout << md;
    } else {
        jls::report::write_text(out_file, md);
        std::cout << "wrote " << out_file << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibrate and compare generalized JLS (LPPL) bubble models"};
    app.set_config("--config", "", "INI/TOML file with option values (sections per subcommand)");
    app.require_subcommand(1);

    FitCmd fit_cmd;
    auto* fit = app.add_subcommand("fit", "calibrate one model on a window");
    add_input(fit, fit_cmd.c, true);
    fit->add_option("--spec", fit_cmd.spec, "M0, M1, M2, M3 or M0prime");
    fit->add_flag("--crash", fit_cmd.crash, "also measure drawdowns and RC (needs post-peak prices)");
    fit->add_option("--horizon-months", fit_cmd.horizon, "valley search horizon after the peak");

    Common cmp_cmd;
    auto* cmp = app.add_subcommand("compare", "fit M0..M3 and run Wilks tests on the five nested pairs");
    add_input(cmp, cmp_cmd, true);

    BootCmd boot_cmd;
    auto* boot = app.add_subcommand("bootstrap", "residual-reshuffling bootstrap for one nested pair");
    add_input(boot, boot_cmd.c, true);
    boot->add_option("--low", boot_cmd.low, "restricted model");
    boot->add_option("--high", boot_cmd.high, "general model");
    boot->add_option("--n-reps", boot_cmd.n_reps, "synthetic series per null")->check(CLI::PositiveNumber);
    boot->add_option("--block-len", boot_cmd.block_len, "shuffle block length in days (1 = daily)")
        ->check(CLI::PositiveNumber);

    ScanCmd scan_cmd;
    auto* scan = app.add_subcommand("scan", "rolling-window fits with residual unit-root tests");
    add_input(scan, scan_cmd.c, false);
    scan->add_option("--spec", scan_cmd.spec, "model");
    scan->add_option("--length", scan_cmd.length, "window length in trading days")->check(CLI::PositiveNumber);
    scan->add_option("--step", scan_cmd.step, "distance between window starts")->check(CLI::PositiveNumber);
    scan->add_option("--offset", scan_cmd.offset, "index of the first window start");

    SimCmd sim_cmd;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic price path");
    sim->add_option("--spec", sim_cmd.spec, "model");
    sim->add_option("--tc", sim_cmd.p.t_c, "critical time (days from the first simulated day)")->required();
    sim->add_option("--m", sim_cmd.p.m, "exponent")->required();
    sim->add_option("--omega", sim_cmd.p.omega, "log-angular frequency")->required();
    sim->add_option("--phi", sim_cmd.p.phi, "phase");
    sim->add_option("--A", sim_cmd.p.A, "A")->required();
    sim->add_option("--B", sim_cmd.p.B, "B")->required();
    sim->add_option("--C", sim_cmd.p.C, "C");
    sim->add_option("--p1", sim_cmd.p.p1, "fundamental price (M1, M3)");
    sim->add_option("--gamma", sim_cmd.p.gamma, "crash nonlinearity (M2, M3)");
    sim->add_option("--kappa", sim_cmd.kappa, "crash size scale");
    sim->add_option("--sigma", sim_cmd.sigma, "daily volatility");
    sim->add_option("--n-days", sim_cmd.n_days, "path length");
    sim->add_option("--seed", sim_cmd.seed, "seed")->required();
    sim->add_option("--mode", sim_cmd.mode, "curve or stochastic")->check(CLI::IsMember({"curve", "stochastic"}));
    sim->add_option("--start", sim_cmd.start, "date of the first simulated day");
    sim->add_option("--out", sim_cmd.out, "output directory");
    sim->add_option("--name", sim_cmd.name, "output file stem");
    sim->add_flag("--no-timestamp", sim_cmd.no_timestamp, "omit metadata.generated_at");

    std::string report_in = ".", report_out;
    auto* rep = app.add_subcommand("report", "collate JSON outputs into a Markdown summary");
    rep->add_option("--in", report_in, "directory with JSON outputs");
    rep->add_option("--output", report_out, "Markdown file (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fit->parsed()) return run_fit(fit_cmd);
        if (cmp->parsed()) return run_compare(cmp_cmd);
        if (boot->parsed()) return run_bootstrap(boot_cmd);
        if (scan->parsed()) return run_scan(scan_cmd);
        if (sim->parsed()) return run_simulate(sim_cmd);
        if (rep->parsed()) return run_report(report_in, report_out);
    } catch (const jls::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const jls::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const jls::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
