#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcload/calendar.hpp"
#include "vcload/error.hpp"

namespace vcload {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Day x interval load table over a contiguous run of calendar days.
/// Row i holds date first_date + i. Invalid rows keep whatever loads were
/// observed (NaN where absent) so that a partially observed current day can
/// still feed an intraday forecast.
struct LoadPanel {
    Date first_date{};
    Eigen::MatrixXd loads; // days x J
    std::vector<bool> valid;
    HolidayCalendar holidays;

    Eigen::Index days() const { return loads.rows(); }
    int intervals() const { return static_cast<int>(loads.cols()); }
    Date date(Eigen::Index row) const { return add_days(first_date, static_cast<long>(row)); }
    Date end_date() const { return date(days()); } // one past the last row

    std::optional<Eigen::Index> row_of(Date d) const {
        const long off = days_between(first_date, d);
        if (off < 0 || off >= days()) return std::nullopt;
        return off;
    }

    bool is_valid(Eigen::Index row) const { return valid[static_cast<std::size_t>(row)]; }

    int class_of(Date d, DayClassScheme scheme) const { return day_class(d, holidays, scheme); }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (bool v : valid) n += v;
        return n;
    }
};

/// Panel restricted to dates strictly before `cutoff` (used to keep
/// backtests from seeing the forecast day).
inline LoadPanel truncate_before(const LoadPanel& panel, Date cutoff) {
    LoadPanel out;
    out.first_date = panel.first_date;
    out.holidays = panel.holidays;
    const long keep = std::clamp<long>(days_between(panel.first_date, cutoff), 0, panel.days());
    out.loads = panel.loads.topRows(keep);
    out.valid.assign(panel.valid.begin(), panel.valid.begin() + keep);
    return out;
}

/// Daily covariates over their own contiguous date range.
struct CovariateTable {
    Date first_date{};
    std::vector<std::string> names;
    Eigen::MatrixXd values; // days x d, NaN when unavailable

    Eigen::Index days() const { return values.rows(); }
    Date date(Eigen::Index row) const { return add_days(first_date, static_cast<long>(row)); }

    int column(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (names[k] == name) return static_cast<int>(k);
        }
        throw ConfigError("unknown covariate '" + name + "'");
    }

    double value(Date d, int col) const {
        const long off = days_between(first_date, d);
        if (off < 0 || off >= days() || col < 0 || col >= values.cols()) return kMissing;
        return values(off, col);
    }
};

/// Restricts covariates to dates strictly before `cutoff`, plus the single
/// day `cutoff` itself when `keep_cutoff` is set (that day's covariate is the
/// forecast input, not an observation).
inline CovariateTable truncate_before(const CovariateTable& covs, Date cutoff, bool keep_cutoff) {
    CovariateTable out;
    out.first_date = covs.first_date;
    out.names = covs.names;
    const long keep = std::clamp<long>(days_between(covs.first_date, cutoff) + (keep_cutoff ? 1 : 0),
                                       0, covs.days());
    out.values = covs.values.topRows(keep);
    return out;
}

namespace detail {

inline void fnv_mix(std::uint64_t& h, std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
        h ^= (word >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ull;
    }
}

inline std::uint64_t double_bits(double v) {
    if (std::isnan(v)) return 0x7ff8000000000000ull;
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    return bits;
}

} // namespace detail

/// Order-dependent FNV-1a hash over panel rows in [first, last) and the
/// listed covariate columns. Byte order is fixed, so the value is portable.
inline std::uint64_t training_window_hash(const LoadPanel& panel, const CovariateTable& covs,
                                          const std::vector<int>& columns, Date first, Date last) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (Date d = first; d < last; d = add_days(d, 1)) {
        const auto row = panel.row_of(d);
        detail::fnv_mix(h, static_cast<std::uint64_t>(d.time_since_epoch().count()));
        if (!row) {
            detail::fnv_mix(h, 0);
            continue;
        }
        detail::fnv_mix(h, panel.is_valid(*row) ? 1 : 2);
        for (int j = 0; j < panel.intervals(); ++j) {
            detail::fnv_mix(h, detail::double_bits(panel.loads(*row, j)));
        }
        for (int c : columns) detail::fnv_mix(h, detail::double_bits(covs.value(d, c)));
    }
    return h;
}

} // namespace vcload
