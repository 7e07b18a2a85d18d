#pragma once

#include <chrono>
#include <cstdio>
#include <set>
#include <string>
#include <string_view>

#include "vcload/error.hpp"

namespace vcload {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD. Throws ConfigError on anything else.
inline Date parse_date(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string s(text);
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 ||
        s[4] != '-' || s[7] != '-') {
        throw ConfigError("invalid date '" + s + "' (expected YYYY-MM-DD)");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) throw ConfigError("invalid calendar date '" + s + "'");
    return Date{ymd};
}

inline std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

inline Date add_days(Date date, long days) { return date + std::chrono::days{days}; }

inline long days_between(Date from, Date to) { return (to - from).count(); }

/// ISO weekday: Monday = 0 ... Sunday = 6.
inline int iso_weekday(Date date) {
    return static_cast<int>(std::chrono::weekday{date}.iso_encoding()) - 1;
}

inline std::chrono::year_month month_of(Date date) {
    const std::chrono::year_month_day ymd{date};
    return ymd.year() / ymd.month();
}

inline Date first_of_month(std::chrono::year_month ym) { return Date{ym / std::chrono::day{1}}; }

inline std::string format_month(std::chrono::year_month ym) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", int(ym.year()), unsigned(ym.month()));
    return buf;
}

inline Date first_of_month(Date date) { return first_of_month(month_of(date)); }
inline std::string format_month(Date date) { return format_month(month_of(date)); }

using HolidayCalendar = std::set<Date>;

/// How forecast days are partitioned into separately fitted models.
enum class DayClassScheme {
    PerWeekday,     ///< Mon..Sun; holidays count as Sunday
    WorkdayHoliday, ///< Mon-Fri workdays vs Sat, Sun and holidays
};

/// Class label of a date under a scheme. PerWeekday returns 0..6 (Mon..Sun),
/// WorkdayHoliday returns 0 (workday) or 1 (holiday).
inline int day_class(Date date, const HolidayCalendar& holidays, DayClassScheme scheme) {
    const bool holiday = holidays.contains(date);
    const int wd = iso_weekday(date);
    switch (scheme) {
    case DayClassScheme::PerWeekday:
        return holiday ? 6 : wd;
    case DayClassScheme::WorkdayHoliday:
        return (holiday || wd >= 5) ? 1 : 0;
    }
    return 0;
}

inline int day_class_count(DayClassScheme scheme) {
    return scheme == DayClassScheme::PerWeekday ? 7 : 2;
}

inline std::string day_class_name(int cls, DayClassScheme scheme) {
    static constexpr const char* weekday_names[] = {"Mon", "Tue", "Wed", "Thu",
                                                    "Fri", "Sat", "Sun"};
    if (scheme == DayClassScheme::PerWeekday) {
        if (cls < 0 || cls > 6) throw IndexError("day class out of range");
        return weekday_names[cls];
    }
    if (cls < 0 || cls > 1) throw IndexError("day class out of range");
    return cls == 0 ? "Workday" : "Holiday";
}

inline int parse_day_class(std::string_view name, DayClassScheme scheme) {
    for (int c = 0; c < day_class_count(scheme); ++c) {
        if (day_class_name(c, scheme) == name) return c;
    }
    throw IndexError("unknown day class '" + std::string(name) + "'");
}

} // namespace vcload
