#pragma once

#include "jls/error.hpp"

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

namespace jls {

/// Calendar date with day resolution. Thin value wrapper over sys_days.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days d) : days_(d) {}
    constexpr Date(int y, unsigned m, unsigned d)
        : days_(std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                            std::chrono::day{d}}) {}

    /// Parses YYYY-MM-DD. Throws DataError on anything else.
    static Date parse(std::string_view s) {
        auto trim = [](std::string_view v) {
            while (!v.empty() && (v.front() == ' ' || v.front() == '\t' || v.front() == '"'))
                v.remove_prefix(1);
            while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '"' ||
                                  v.back() == '\r'))
                v.remove_suffix(1);
            return v;
        };
        s = trim(s);
        if (s.size() != 10 || s[4] != '-' || s[7] != '-')
            throw DataError("invalid ISO date '" + std::string(s) + "'");
        int y = 0;
        unsigned m = 0, d = 0;
        auto ok = [](auto r) { return r.ec == std::errc{}; };
        if (!ok(std::from_chars(s.data(), s.data() + 4, y)) ||
            !ok(std::from_chars(s.data() + 5, s.data() + 7, m)) ||
            !ok(std::from_chars(s.data() + 8, s.data() + 10, d)))
            throw DataError("invalid ISO date '" + std::string(s) + "'");
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
        if (!ymd.ok()) throw DataError("invalid ISO date '" + std::string(s) + "'");
        return Date(std::chrono::sys_days{ymd});
    }

    [[nodiscard]] constexpr std::chrono::sys_days sys() const { return days_; }
    [[nodiscard]] constexpr long serial() const { return days_.time_since_epoch().count(); }
    [[nodiscard]] constexpr std::chrono::year_month_day ymd() const { return {days_}; }

    [[nodiscard]] constexpr Date plus_days(long n) const {
        return Date(days_ + std::chrono::days{n});
    }

    /// Same day-of-month n months later, clamped to the month's last day.
    [[nodiscard]] constexpr Date plus_months(int n) const {
        auto d = ymd() + std::chrono::months{n};
        if (!d.ok()) d = d.year() / d.month() / std::chrono::last;
        return Date(std::chrono::sys_days{d});
    }

    [[nodiscard]] constexpr bool is_weekend() const {
        auto wd = std::chrono::weekday{days_}.c_encoding();
        return wd == 0 || wd == 6;
    }

    [[nodiscard]] std::string iso() const {
        auto d = ymd();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(d.year()), unsigned(d.month()),
                      unsigned(d.day()));
        return buf;
    }

    friend constexpr long operator-(Date a, Date b) { return a.serial() - b.serial(); }
    friend constexpr auto operator<=>(Date, Date) = default;

private:
    std::chrono::sys_days days_{};
};

/// Next Monday-Friday date strictly after `d`.
inline Date next_weekday(Date d) {
    do {
        d = d.plus_days(1);
    } while (d.is_weekend());
    return d;
}

}  // namespace jls
