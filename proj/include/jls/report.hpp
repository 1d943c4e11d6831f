#pragma once

#include "jls/analytics.hpp"
#include "jls/calibration.hpp"
#include "jls/error.hpp"
#include "jls/lppl.hpp"
#include "jls/stats/bootstrap.hpp"
#include "jls/stats/wilks.hpp"
#include "jls/timeseries.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace jls::report {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// 64-bit FNV-1a.
[[nodiscard]] constexpr std::uint64_t fnv1a(std::string_view bytes,
                                            std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

[[nodiscard]] inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Combined hash of the given files' contents, in order.
[[nodiscard]] inline std::string hash_inputs(const std::vector<std::string>& paths) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : paths) h = fnv1a(read_file(p), h);
    return hex64(h);
}

[[nodiscard]] inline std::string utc_timestamp() {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    const auto day = std::chrono::floor<std::chrono::days>(now);
    const std::chrono::hh_mm_ss hms(now - day);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", Date(day).iso().c_str(),
                  int(hms.hours().count()), int(hms.minutes().count()), int(hms.seconds().count()));
    return buf;
}

/// Non-finite doubles become null.
[[nodiscard]] inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

[[nodiscard]] inline json to_json(const LpplParams& p) {
    return json{{"t_c", num(p.t_c)}, {"m", num(p.m)},   {"omega", num(p.omega)},
                {"phi", num(p.phi)}, {"A", num(p.A)},   {"B", num(p.B)},
                {"C", num(p.C)},     {"p1", num(p.p1)}, {"gamma", num(p.gamma)}};
}

[[nodiscard]] inline LpplParams params_from_json(const json& j) {
    LpplParams p;
    p.t_c = j.at("t_c").get<double>();
    p.m = j.at("m").get<double>();
    p.omega = j.at("omega").get<double>();
    p.phi = j.at("phi").get<double>();
    p.A = j.at("A").get<double>();
    p.B = j.at("B").get<double>();
    p.C = j.at("C").get<double>();
    p.p1 = j.value("p1", 0.0);
    p.gamma = j.value("gamma", 1.0);
    return p;
}

[[nodiscard]] inline json to_json(const SearchBounds& b) {
    return json{{"t_c", {b.tc_lo, b.tc_hi}},       {"m", {b.m_lo, b.m_hi}},
                {"omega", {b.omega_lo, b.omega_hi}}, {"phi", {b.phi_lo, b.phi_hi}},
                {"p1", {b.p1_lo, b.p1_hi}},         {"gamma", {b.gamma_lo, b.gamma_hi}}};
}

[[nodiscard]] inline json to_json(const FitResult& f, const DiscountedSeries* series = nullptr) {
    json j{{"spec", f.spec.name()},
           {"params", to_json(f.params)},
           {"rms", num(f.rms)},
           {"cost", num(f.cost)},
           {"objective", num(f.objective)},
           {"n", f.residuals.values.size()},
           {"boundary_ok", f.boundary_ok},
           {"flags",
            {{"bubble_m", f.flags.bubble_m},
             {"hazard_nonneg", f.flags.hazard_nonneg},
             {"lppl_conditions", f.flags.lppl_conditions},
             {"b", num(f.flags.b)}}},
           {"n_starts_tried", f.n_starts_tried},
           {"n_rejected", f.n_rejected},
           {"seed", f.seed},
           {"condition", num(f.condition)},
           {"bounds", to_json(f.bounds)}};
    if (series && !series->dates.empty()) {
        j["window"] = {{"t1", series->dates.front().iso()}, {"t2", series->dates.back().iso()}};
        j["t_c_date"] = trading_date_at(series->dates, f.params.t_c).iso();
        if (f.spec.free_p1()) {
            j["fundamental_t1"] = num(f.params.p1 / series->values.front());
        }
        j["rate_backfilled"] = series->rate_backfilled;
    }
    return j;
}

[[nodiscard]] inline json to_json(const CrashMetrics& c) {
    json j{{"t_c_date", c.t_c_date.iso()},
           {"t_p", c.t_p.iso()},
           {"tc_minus_tp_days", c.tc_minus_tp_days},
           {"p_peak", num(c.p_peak)},
           {"dd_2months", num(c.dd_2months)},
           {"dd_max", num(c.dd_max)},
           {"valley_date", c.valley_date.iso()},
           {"rc_2months", num(c.rc_2months)},
           {"rc_max", num(c.rc_max)}};
    j["kappa"] = c.kappa ? num(*c.kappa) : json(nullptr);
    if (!c.kappa) j["kappa_note"] = "kappa differs from RC for gamma < 1";
    j["fundamental_peak"] = c.fundamental_at_peak ? num(*c.fundamental_at_peak) : json(nullptr);
    return j;
}

[[nodiscard]] inline json to_json(const stats::WilksResult& w) {
    return json{{"low", w.low.name()},   {"high", w.high.name()},   {"T", num(w.T)},
                {"k", w.k},              {"p_value", num(w.p_value)},
                {"sigma2_low", num(w.sigma2_low)}, {"sigma2_high", num(w.sigma2_high)},
                {"n", w.n},              {"clamped", w.clamped}};
}

[[nodiscard]] inline json to_json(const stats::BootstrapNull& b) {
    json d = json::array();
    for (double v : b.d_samples) d.push_back(num(v));
    return json{{"generator", b.generator.name()}, {"p_value", num(b.p_value)},
                {"failures", b.failures},          {"redraws", b.redraws},
                {"d_samples", std::move(d)}};
}

[[nodiscard]] inline json to_json(const stats::BootstrapResult& r) {
    return json{{"low", r.low.name()},
                {"high", r.high.name()},
                {"n_reps", r.n_reps},
                {"block_len", r.block_len},
                {"seed", r.seed},
                {"d_fit", num(r.d_fit)},
                {"cost_low", num(r.cost_low)},
                {"cost_high", num(r.cost_high)},
                {"p_l_true", num(r.p_l_true())},
                {"p_h_true", num(r.p_h_true())},
                {"low_true", to_json(r.low_true)},
                {"high_true", to_json(r.high_true)}};
}

[[nodiscard]] inline json census_summary(const ScanCensus& c) {
    return json{{"spec", c.spec.name()},
                {"n_windows", c.n_windows},
                {"n_fitted", c.n_fitted},
                {"n_failed", c.n_failed},
                {"n_pp_stationary", c.n_pp},
                {"n_df_stationary", c.n_df},
                {"n_lppl", c.n_lppl},
                {"n_lppl_pp_stationary", c.n_lppl_pp},
                {"n_lppl_df_stationary", c.n_lppl_df},
                {"frac_pp", num(c.frac_pp())},
                {"frac_df", num(c.frac_df())},
                {"p_lppl", num(c.p_lppl())},
                {"frac_lppl_pp", num(c.frac_lppl_pp())},
                {"frac_lppl_df", num(c.frac_lppl_df())},
                {"df_regression", "constant, no trend"}};
}

/// Wraps a payload with the schema version, seed and input hash. The timestamp lives under
/// "metadata" so reruns differ only there.
[[nodiscard]] inline json envelope(std::string_view kind, std::uint64_t seed,
                                   const std::string& input_hash, const std::string& config_hash,
                                   json result, bool with_timestamp = true) {
    json j{{"schema_version", kSchemaVersion},
           {"kind", kind},
           {"seed", seed},
           {"input_hash", input_hash},
           {"config_hash", config_hash},
           {"result", std::move(result)}};
    j["metadata"] = with_timestamp ? json{{"generated_at", utc_timestamp()}} : json::object();
    return j;
}

inline void write_text(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

[[nodiscard]] inline std::string fmt(double v, int digits = 10) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

/// date,t_index,price,model,residual
[[nodiscard]] inline std::string residuals_csv(const FitResult& f, const DiscountedSeries& s) {
    std::ostringstream o;
    o << "date,t_index,price,model,residual\n";
    const ModelSpec price_spec = f.spec.id() == ModelId::M0prime ? ModelSpec(ModelId::M0) : f.spec;
    for (std::size_t i = 0; i < s.size(); ++i) {
        o << (i < s.dates.size() ? s.dates[i].iso() : std::to_string(i)) << ',' << fmt(s.t_index[i])
          << ',' << fmt(s.values[i], 17) << ',' << fmt(model_price(price_spec, f.params, s.t_index[i]), 17)
          << ',' << fmt(f.residuals.values[i], 17) << '\n';
    }
    return o.str();
}

/// Model curve on a regular grid from t = 0 up to just before t_c (plot-ready).
[[nodiscard]] inline std::string curve_csv(const FitResult& f, const DiscountedSeries& s,
                                           std::size_t points = 400) {
    std::ostringstream o;
    o << "t_index,model\n";
    const ModelSpec price_spec = f.spec.id() == ModelId::M0prime ? ModelSpec(ModelId::M0) : f.spec;
    const double t0 = s.t_index.empty() ? 0.0 : s.t_index.front();
    const double t_end = f.params.t_c - 0.5;
    for (std::size_t k = 0; k < points; ++k) {
        const double t = t0 + (t_end - t0) * double(k) / double(points - 1);
        double v = std::nan("");
        try {
            v = model_price(price_spec, f.params, t);
        } catch (const DomainError&) {
        }
        o << fmt(t) << ',' << fmt(v, 17) << '\n';
    }
    return o.str();
}

/// t1,t2,status,t_c,m,omega,phi,A,B,C,p1,gamma,rms,pp_stat,pp_stationary,df_stat,df_stationary,lppl
[[nodiscard]] inline std::string scan_csv_header() {
    return "t1,t2,status,t_c,m,omega,phi,A,B,C,p1,gamma,rms,pp_stat,pp_stationary,df_stat,"
           "df_stationary,lppl\n";
}

[[nodiscard]] inline std::string scan_csv_row(const ScanWindow& w) {
    std::ostringstream o;
    o << w.t1.iso() << ',' << w.t2.iso() << ',';
    if (!w.fit) {
        o << "failed" << std::string(15, ',') << '\n';
        return o.str();
    }
    const auto& p = w.fit->params;
    o << "ok," << fmt(p.t_c) << ',' << fmt(p.m) << ',' << fmt(p.omega) << ',' << fmt(p.phi) << ','
      << fmt(p.A) << ',' << fmt(p.B) << ',' << fmt(p.C) << ',' << fmt(p.p1) << ',' << fmt(p.gamma)
      << ',' << fmt(w.fit->rms) << ',' << fmt(w.stationarity.pp.statistic) << ','
      << int(w.stationarity.pp.stationary) << ',' << fmt(w.stationarity.df.statistic) << ','
      << int(w.stationarity.df.stationary) << ',' << int(w.lppl) << '\n';
    return o.str();
}

namespace detail {

inline std::string cell(const json& j, int digits = 4) {
    if (j.is_null()) return "-";
    if (j.is_number_float()) return fmt(j.get<double>(), digits);
    if (j.is_boolean()) return j.get<bool>() ? "yes" : "no";
    if (j.is_string()) return j.get<std::string>();
    return j.dump();
}

inline const json& at_or_null(const json& j, std::string_view key) {
    static const json null_json;
    const auto it = j.find(key);
    return it == j.end() ? null_json : *it;
}

}  // namespace detail

/// Collates report envelopes (fit, compare, bootstrap, scan) into a Markdown summary.
[[nodiscard]] inline std::string render_markdown(const std::vector<json>& docs) {
    using detail::at_or_null;
    using detail::cell;
    std::ostringstream fits, wilks, boot, scans;
    for (const auto& d : docs) {
        const auto kind = d.value("kind", std::string());
        const auto& r = at_or_null(d, "result");
        if (kind == "fit") {
            const auto& f = r.at("fit");
            const auto& p = f.at("params");
            const auto& c = at_or_null(r, "crash");
            fits << "| " << cell(at_or_null(r, "label")) << " | " << cell(f.at("spec")) << " | "
                 << cell(at_or_null(f, "t_c_date")) << " | " << cell(at_or_null(c, "tc_minus_tp_days"))
                 << " | " << cell(p.at("m")) << " | " << cell(p.at("omega")) << " | "
                 << cell(p.at("phi")) << " | " << cell(at_or_null(f, "fundamental_t1")) << " | "
                 << cell(at_or_null(c, "fundamental_peak")) << " | " << cell(p.at("gamma")) << " | "
                 << cell(at_or_null(c, "rc_2months")) << " | " << cell(at_or_null(c, "rc_max"))
                 << " | " << cell(f.at("rms")) << " |\n";
        } else if (kind == "compare") {
            for (const auto& w : r.at("wilks"))
                wilks << "| " << cell(at_or_null(r, "label")) << " | (" << cell(w.at("low")) << ", "
                      << cell(w.at("high")) << ") | " << cell(w.at("T")) << " | " << cell(w.at("k"))
                      << " | " << cell(w.at("p_value")) << " |\n";
        } else if (kind == "bootstrap") {
            boot << "| " << cell(at_or_null(r, "label")) << " | (" << cell(r.at("low")) << ", "
                 << cell(r.at("high")) << ") | " << cell(r.at("block_len")) << " | "
                 << cell(r.at("n_reps")) << " | " << cell(r.at("p_l_true")) << " | "
                 << cell(r.at("p_h_true")) << " |\n";
        } else if (kind == "scan") {
            const auto& s = r.at("summary");
            scans << "| " << cell(at_or_null(r, "label")) << " | " << cell(s.at("spec")) << " | "
                  << cell(s.at("n_windows")) << " | " << cell(s.at("frac_pp")) << " | "
                  << cell(s.at("frac_df")) << " | " << cell(s.at("p_lppl")) << " | "
                  << cell(s.at("frac_lppl_pp")) << " | " << cell(s.at("frac_lppl_df")) << " |\n";
        }
    }
    std::ostringstream md;
    md << "# JLS calibration report\n\n";
    if (!fits.str().empty())
        md << "## Fits\n\n| series | model | t_c | abs(t_c - t_p) | m | omega | phi | p_f(t1)/p(t1) "
              "| p_f(t_p)/p(t_p) | gamma | RC 2months | RC max | RMS |\n"
              "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n"
           << fits.str() << '\n';
    if (!scans.str().empty())
        md << "## Rolling-window stationarity\n\n| series | model | windows | PP | DF | P_LPPL | "
              "PP given LPPL | DF given LPPL |\n|---|---|---|---|---|---|---|---|\n"
           << scans.str() << '\n';
    if (!wilks.str().empty())
        md << "## Wilks tests\n\n| series | pair | T | k | p |\n|---|---|---|---|---|\n"
           << wilks.str() << '\n';
    if (!boot.str().empty())
        md << "## Bootstrap\n\n| series | pair | block | reps | p (M_l true) | p (M_h true) |\n"
              "|---|---|---|---|---|---|\n"
           << boot.str() << '\n';
    return md.str();
}

}  // namespace jls::report
