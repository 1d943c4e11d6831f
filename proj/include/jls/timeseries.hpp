#pragma once

#include "jls/date.hpp"
#include "jls/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace jls {

/// Daily observed prices on trading days.
struct PriceSeries {
    std::vector<Date> dates;
    std::vector<double> values;
    std::string label;

    [[nodiscard]] std::size_t size() const { return dates.size(); }

    /// Checks ordering and positivity. Length is checked by the fitting code, not here.
    void validate() const {
        if (dates.size() != values.size())
            throw DataError("price series: dates and values differ in length");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(values[i] > 0.0)) throw DataError("price series: non-positive price");
            if (i > 0 && !(dates[i - 1] < dates[i]))
                throw DataError("price series: dates not strictly increasing at " + dates[i].iso());
        }
    }

    /// Index of the first date >= d, or size() if none.
    [[nodiscard]] std::size_t lower_index(Date d) const {
        return std::size_t(std::lower_bound(dates.begin(), dates.end(), d) - dates.begin());
    }
};

/// Annualized risk-free rates as decimal fractions (0.05 == 5%).
struct RateSeries {
    std::vector<Date> dates;
    std::vector<double> rates;

    [[nodiscard]] std::size_t size() const { return dates.size(); }

    static RateSeries constant(Date from, double rate) { return {{from}, {rate}}; }

    void validate() const {
        if (dates.empty()) throw DataError("empty rate series");
        if (dates.size() != rates.size())
            throw DataError("rate series: dates and rates differ in length");
        for (std::size_t i = 0; i < rates.size(); ++i) {
            if (!(rates[i] > -1.0)) throw DataError("rate series: rate <= -100%");
            if (i > 0 && !(dates[i - 1] < dates[i]))
                throw DataError("rate series: dates not strictly increasing at " + dates[i].iso());
        }
    }

    /// Rate in force on calendar day `d`: the most recent observation on or before `d`.
    /// Days before the first observation take the first rate; `backfilled` reports that.
    [[nodiscard]] double at(Date d, bool* backfilled = nullptr) const {
        auto it = std::upper_bound(dates.begin(), dates.end(), d);
        if (it == dates.begin()) {
            if (backfilled) *backfilled = true;
            return rates.front();
        }
        return rates[std::size_t(it - dates.begin()) - 1];
    }
};

/// Continuously discounted prices over one fit window [t1, t2].
struct DiscountedSeries {
    std::vector<Date> dates;
    std::vector<double> values;    ///< discounted p(t)
    std::vector<double> observed;  ///< p_obs(t)
    std::vector<double> t_index;   ///< 0 .. N-1, trading-day index
    std::size_t source_offset = 0; ///< position of t1 in the source PriceSeries
    bool rate_backfilled = false;  ///< some day preceded the first rate observation
    std::string label;

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] double min_value() const {
        return *std::min_element(values.begin(), values.end());
    }
};

enum class RateUnits { Percent, Decimal };

struct CsvOptions {
    bool has_header = false;
    std::size_t date_column = 0;
    std::size_t value_column = 1;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string_view trim(std::string_view v) {
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t' || v.front() == '"'))
        v.remove_prefix(1);
    while (!v.empty() &&
           (v.back() == ' ' || v.back() == '\t' || v.back() == '"' || v.back() == '\r'))
        v.remove_suffix(1);
    return v;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

struct CsvRow {
    std::size_t line;
    Date date;
    std::string_view raw_value;
};

// Reads (line number, date, raw value text) rows; blank lines skipped.
template <typename OnRow>
void read_csv_rows(const std::string& path, const CsvOptions& opt, OnRow&& on_row) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && opt.has_header) continue;
        if (trim(line).empty()) continue;
        auto cols = split_csv(line);
        std::size_t need = std::max(opt.date_column, opt.value_column) + 1;
        if (cols.size() < need)
            throw DataError(path + ": parse failure at line " + std::to_string(lineno) +
                            ": expected " + std::to_string(need) + " columns");
        Date d;
        try {
            d = Date::parse(cols[opt.date_column]);
        } catch (const DataError& e) {
            throw DataError(path + ": parse failure at line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        on_row(CsvRow{lineno, d, trim(cols[opt.value_column])});
    }
}

}  // namespace detail

/// Loads a two-column (date, price) CSV. Rows are returned sorted by date.
inline PriceSeries load_price_csv(const std::string& path, const CsvOptions& opt = {}) {
    struct Row {
        Date d;
        double v;
        std::size_t line;
    };
    std::vector<Row> rows;
    detail::read_csv_rows(path, opt, [&](const detail::CsvRow& r) {
        auto v = detail::parse_double(r.raw_value);
        if (!v)
            throw DataError(path + ": parse failure at line " + std::to_string(r.line) +
                            ": bad price '" + std::string(r.raw_value) + "'");
        if (!(*v > 0.0))
            throw DataError(path + ": non-positive price at line " + std::to_string(r.line));
        rows.push_back({r.date, *v, r.line});
    });
    if (rows.empty()) throw DataError(path + ": empty price series");
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.d < b.d; });
    PriceSeries s;
    s.label = path;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].d == rows[i - 1].d)
            throw DataError(path + ": duplicate date " + rows[i].d.iso() + " at line " +
                            std::to_string(rows[i].line));
        s.dates.push_back(rows[i].d);
        s.values.push_back(rows[i].v);
    }
    return s;
}

/// Loads a (date, annualized rate) CSV. Rows whose value is empty, "." or "NA"
/// (holiday markers in public T-bill feeds) are skipped.
inline RateSeries load_rate_csv(const std::string& path, RateUnits units = RateUnits::Percent,
                                const CsvOptions& opt = {}) {
    std::vector<std::pair<Date, double>> rows;
    std::vector<std::size_t> lines;
    detail::read_csv_rows(path, opt, [&](const detail::CsvRow& r) {
        if (r.raw_value.empty() || r.raw_value == "." || r.raw_value == "NA") return;
        auto v = detail::parse_double(r.raw_value);
        if (!v)
            throw DataError(path + ": parse failure at line " + std::to_string(r.line) +
                            ": bad rate '" + std::string(r.raw_value) + "'");
        double rate = units == RateUnits::Percent ? *v / 100.0 : *v;
        if (!(rate > -1.0))
            throw DataError(path + ": rate <= -100% at line " + std::to_string(r.line));
        rows.emplace_back(r.date, rate);
        lines.push_back(r.line);
    });
    if (rows.empty()) throw DataError("empty rate series");
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rows[a].first < rows[b].first; });
    RateSeries s;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& [d, r] = rows[order[k]];
        if (k > 0 && d == s.dates.back())
            throw DataError(path + ": duplicate date " + d.iso() + " at line " +
                            std::to_string(lines[order[k]]));
        s.dates.push_back(d);
        s.rates.push_back(r);
    }
    return s;
}

/// Cumulative discount factor prod_{s=from+1..to} (1 + r_f(s))^(-1/365) over calendar days.
inline double discount_factor(const RateSeries& rates, Date from, Date to,
                              bool* backfilled = nullptr) {
    double log_sum = 0.0;
    for (Date s = from.plus_days(1); s <= to; s = s.plus_days(1))
        log_sum -= std::log1p(rates.at(s, backfilled)) / 365.0;
    return std::exp(log_sum);
}

/// Discounts the trading days of `prices` falling in [t1, t2].
/// p(t) = p_obs(t) * prod_{s=t1+1..t} (1+r_f(s))^(-1/365), the product over calendar days.
/// The window starts at the first trading day on/after t1 and ends at the last on/before t2.
inline DiscountedSeries discount(const PriceSeries& prices, const RateSeries& rates, Date t1,
                                 Date t2) {
    if (prices.size() == 0) throw DataError("discount: empty price series");
    if (rates.size() == 0) throw DataError("empty rate series");
    if (t1 < prices.dates.front() || t2 > prices.dates.back())
        throw DataError("discount: window " + t1.iso() + ".." + t2.iso() +
                        " not covered by price data " + prices.dates.front().iso() + ".." +
                        prices.dates.back().iso());
    std::size_t lo = prices.lower_index(t1);
    std::size_t hi = std::size_t(
        std::upper_bound(prices.dates.begin(), prices.dates.end(), t2) - prices.dates.begin());
    if (t2 < t1 || lo >= hi) throw DataError("discount: empty window");

    DiscountedSeries out;
    out.label = prices.label;
    out.source_offset = lo;
    const Date start = prices.dates[lo];
    double log_sum = 0.0;
    Date cursor = start;
    for (std::size_t i = lo; i < hi; ++i) {
        const Date d = prices.dates[i];
        for (Date s = cursor.plus_days(1); s <= d; s = s.plus_days(1))
            log_sum -= std::log1p(rates.at(s, &out.rate_backfilled)) / 365.0;
        cursor = d;
        out.dates.push_back(d);
        out.observed.push_back(prices.values[i]);
        out.values.push_back(prices.values[i] * std::exp(log_sum));
        out.t_index.push_back(double(i - lo));
    }
    return out;
}

/// Builds a discounted series directly from values (zero rates), indexed 0..N-1.
inline DiscountedSeries undiscounted(std::span<const double> values, std::vector<Date> dates = {}) {
    DiscountedSeries s;
    s.values.assign(values.begin(), values.end());
    s.observed = s.values;
    s.t_index.resize(values.size());
    std::iota(s.t_index.begin(), s.t_index.end(), 0.0);
    s.dates = std::move(dates);
    return s;
}

struct Window {
    std::size_t start = 0;  ///< first index in the price series
    std::size_t end = 0;    ///< last index (inclusive)
    Date t1, t2;
};

/// Overlapping fixed-length windows starting at offset, offset+step, ...; partial tails dropped.
inline std::vector<Window> rolling_windows(const PriceSeries& prices, std::size_t length,
                                           std::size_t step, std::size_t offset = 0) {
    if (step == 0) throw DataError("rolling_windows: step must be >= 1");
    if (length == 0) throw DataError("rolling_windows: length must be >= 1");
    if (offset + length > prices.size())
        throw DataError("rolling_windows: length " + std::to_string(length) +
                        " exceeds series length " + std::to_string(prices.size()));
    std::vector<Window> out;
    for (std::size_t s = offset; s + length <= prices.size(); s += step)
        out.push_back({s, s + length - 1, prices.dates[s], prices.dates[s + length - 1]});
    return out;
}

}  // namespace jls
