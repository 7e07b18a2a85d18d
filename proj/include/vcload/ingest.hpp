#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vcload/calendar.hpp"
#include "vcload/error.hpp"
#include "vcload/panel.hpp"

namespace vcload {

/// New covariate column = mean of `source` over the `window` days before
/// each date (the date itself excluded). Undefined without a full window.
struct MovingAverage {
    std::string source;
    int window = 14;
    std::string name; // defaults to source + "_ma" + window

    bool operator==(const MovingAverage&) const = default;
};

struct IngestOptions {
    double outlier_mads = 8.0; // 0 disables the outlier rule
    DayClassScheme scheme = DayClassScheme::PerWeekday;
    std::vector<MovingAverage> moving_averages;
    std::optional<int> intervals; // J; inferred from the data when absent
};

struct IngestReport {
    std::size_t file_days = 0;
    std::size_t gap_days = 0;
    std::size_t incomplete_days = 0;
    std::size_t nonfinite_days = 0;
    std::size_t outlier_days = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string where(const std::string& file, std::size_t line) {
    return file + ":" + std::to_string(line) + ": ";
}

inline double parse_number(const std::string& text, const std::string& file, std::size_t line) {
    if (text.empty() || text == "NA" || text == "na" || text == "nan" || text == "NaN") return kMissing;
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        if (text == "inf" || text == "-inf" || text == "Inf" || text == "-Inf") {
            return text[0] == '-' ? -std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::infinity();
        }
        throw IngestError(where(file, line) + "not a number: '" + text + "'");
    }
    return v;
}

inline int parse_int(const std::string& text, const std::string& file, std::size_t line) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw IngestError(where(file, line) + "not an integer: '" + text + "'");
    }
    return v;
}

inline Date parse_date_at(const std::string& text, const std::string& file, std::size_t line) {
    try {
        return parse_date(text);
    } catch (const Error&) {
        throw IngestError(where(file, line) + "bad date '" + text + "'");
    }
}

inline double median(std::vector<double> v) {
    const auto n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    const double hi = v[n / 2];
    if (n % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

} // namespace detail

/// Reads a "date,interval,load" table into a contiguous panel.
inline LoadPanel read_loads(std::istream& is, const std::string& file, const IngestOptions& opt = {},
                            IngestReport* report = nullptr) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) throw IngestError(file + ": empty file");
    ++lineno;
    const auto header = detail::split_csv(line);
    if (header.size() != 3 || header[0] != "date" || header[1] != "interval" || header[2] != "load") {
        throw IngestError(detail::where(file, 1) + "expected header 'date,interval,load'");
    }
    struct Cell {
        Date d;
        int j;
        double v;
    };
    std::vector<Cell> cells;
    std::map<std::pair<long, int>, std::size_t> seen;
    int J = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 3) throw IngestError(detail::where(file, lineno) + "expected 3 fields");
        const Date d = detail::parse_date_at(f[0], file, lineno);
        const int j = detail::parse_int(f[1], file, lineno);
        if (j < 1) throw IngestError(detail::where(file, lineno) + "interval index must be >= 1");
        if (opt.intervals && j > *opt.intervals) {
            throw IngestError(detail::where(file, lineno) + "interval index exceeds J = " +
                              std::to_string(*opt.intervals));
        }
        const double v = detail::parse_number(f[2], file, lineno);
        const auto key = std::make_pair(long(d.time_since_epoch().count()), j);
        if (const auto it = seen.find(key); it != seen.end()) {
            throw IngestError(detail::where(file, lineno) + "duplicate row for " + f[0] + " interval " + f[1] +
                              " (first seen on line " + std::to_string(it->second) + ")");
        }
        seen.emplace(key, lineno);
        cells.push_back({d, j, v});
        J = std::max(J, j);
    }
    if (cells.empty()) throw IngestError(file + ": no data rows");
    if (opt.intervals) J = *opt.intervals;

    Date first = cells.front().d, last = cells.front().d;
    for (const auto& c : cells) {
        first = std::min(first, c.d);
        last = std::max(last, c.d);
    }
    LoadPanel panel;
    panel.first_date = first;
    const long days = days_between(first, last) + 1;
    panel.loads = Eigen::MatrixXd::Constant(days, J, kMissing);
    std::vector<int> filled(static_cast<std::size_t>(days), 0);
    for (const auto& c : cells) {
        const long r = days_between(first, c.d);
        panel.loads(r, c.j - 1) = c.v;
        ++filled[static_cast<std::size_t>(r)];
    }

    IngestReport rep;
    panel.valid.assign(static_cast<std::size_t>(days), true);
    for (long r = 0; r < days; ++r) {
        const auto i = static_cast<std::size_t>(r);
        if (filled[i] == 0) {
            panel.valid[i] = false;
            ++rep.gap_days;
            continue;
        }
        ++rep.file_days;
        if (filled[i] < J) {
            panel.valid[i] = false;
            ++rep.incomplete_days;
            continue;
        }
        if (!panel.loads.row(r).allFinite()) {
            panel.valid[i] = false;
            ++rep.nonfinite_days;
        }
    }
    if (rep.gap_days) {
        rep.warnings.push_back(file + ": " + std::to_string(rep.gap_days) + " calendar days absent (marked invalid)");
    }
    if (report) *report = rep;
    return panel;
}

/// Marks days invalid when any interval lies more than `mads` median
/// absolute deviations from the median of its day class and interval.
/// Call after holidays are attached so the classes are right.
inline std::size_t mark_outliers(LoadPanel& panel, double mads, DayClassScheme scheme) {
    if (!(mads > 0.0)) return 0;
    std::size_t flagged = 0;
    const int classes = day_class_count(scheme);
    std::vector<bool> outlier(panel.valid.size(), false);
    for (int cls = 0; cls < classes; ++cls) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index r = 0; r < panel.days(); ++r) {
            if (panel.is_valid(r) && panel.class_of(panel.date(r), scheme) == cls) rows.push_back(r);
        }
        if (rows.size() < 3) continue;
        for (int j = 0; j < panel.intervals(); ++j) {
            std::vector<double> v;
            for (auto r : rows) v.push_back(panel.loads(r, j));
            const double med = detail::median(v);
            std::vector<double> dev;
            for (double x : v) dev.push_back(std::abs(x - med));
            const double mad = detail::median(dev);
            if (!(mad > 0.0)) continue;
            for (auto r : rows) {
                if (std::abs(panel.loads(r, j) - med) > mads * mad) outlier[static_cast<std::size_t>(r)] = true;
            }
        }
    }
    for (std::size_t i = 0; i < outlier.size(); ++i) {
        if (outlier[i]) {
            panel.valid[i] = false;
            ++flagged;
        }
    }
    return flagged;
}

/// Reads a "date,<name>,..." table.
inline CovariateTable read_covariates(std::istream& is, const std::string& file) {
    std::string line;
    if (!std::getline(is, line)) throw IngestError(file + ": empty file");
    const auto header = detail::split_csv(line);
    if (header.size() < 2 || header[0] != "date") {
        throw IngestError(detail::where(file, 1) + "expected header 'date,<covariate>,...'");
    }
    CovariateTable t;
    t.names.assign(header.begin() + 1, header.end());
    for (std::size_t a = 0; a < t.names.size(); ++a) {
        if (t.names[a].empty()) throw IngestError(detail::where(file, 1) + "empty column name");
        for (std::size_t b = 0; b < a; ++b) {
            if (t.names[a] == t.names[b]) throw IngestError(detail::where(file, 1) + "duplicate column '" + t.names[a] + "'");
        }
    }
    std::vector<std::pair<Date, std::vector<double>>> rows;
    std::map<long, std::size_t> seen;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != header.size()) {
            throw IngestError(detail::where(file, lineno) + "expected " + std::to_string(header.size()) + " fields");
        }
        const Date d = detail::parse_date_at(f[0], file, lineno);
        const long key = d.time_since_epoch().count();
        if (const auto it = seen.find(key); it != seen.end()) {
            throw IngestError(detail::where(file, lineno) + "duplicate date " + f[0] + " (first seen on line " +
                              std::to_string(it->second) + ")");
        }
        seen.emplace(key, lineno);
        std::vector<double> vals;
        for (std::size_t k = 1; k < f.size(); ++k) vals.push_back(detail::parse_number(f[k], file, lineno));
        rows.emplace_back(d, std::move(vals));
    }
    if (rows.empty()) throw IngestError(file + ": no data rows");
    Date first = rows.front().first, last = first;
    for (const auto& r : rows) {
        first = std::min(first, r.first);
        last = std::max(last, r.first);
    }
    t.first_date = first;
    t.values = Eigen::MatrixXd::Constant(days_between(first, last) + 1, static_cast<Eigen::Index>(t.names.size()), kMissing);
    for (const auto& [d, vals] : rows) {
        for (std::size_t k = 0; k < vals.size(); ++k) {
            t.values(days_between(first, d), static_cast<Eigen::Index>(k)) = vals[k];
        }
    }
    return t;
}

inline void add_moving_average(CovariateTable& t, const MovingAverage& ma) {
    if (ma.window < 1) throw ConfigError("moving-average window must be >= 1");
    const int src = t.column(ma.source);
    const std::string name = ma.name.empty() ? ma.source + "_ma" + std::to_string(ma.window) : ma.name;
    for (const auto& n : t.names) {
        if (n == name) throw ConfigError("covariate column '" + name + "' already exists");
    }
    const Eigen::Index n = t.days();
    Eigen::VectorXd col = Eigen::VectorXd::Constant(n, kMissing);
    for (Eigen::Index i = ma.window; i < n; ++i) {
        const auto seg = t.values.col(src).segment(i - ma.window, ma.window);
        if (seg.allFinite()) col(i) = seg.mean();
    }
    t.values.conservativeResize(Eigen::NoChange, t.values.cols() + 1);
    t.values.col(t.values.cols() - 1) = col;
    t.names.push_back(name);
}

inline HolidayCalendar read_holidays(std::istream& is, const std::string& file) {
    HolidayCalendar h;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (const auto c = s.find('#'); c != std::string::npos) s = detail::trim(s.substr(0, c));
        if (s.empty()) continue;
        h.insert(detail::parse_date_at(s, file, lineno));
    }
    return h;
}

struct IngestResult {
    LoadPanel panel;
    CovariateTable covs;
    IngestReport report;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestError("cannot open " + path);
    return is;
}

} // namespace detail

/// Loads, covariates and optional holidays from files.
inline IngestResult ingest(const std::string& loads_path, const std::string& covs_path,
                           const std::string& holidays_path, const IngestOptions& opt = {}) {
    IngestResult out;
    {
        auto is = detail::open_input(loads_path);
        out.panel = read_loads(is, loads_path, opt, &out.report);
    }
    if (!holidays_path.empty()) {
        auto is = detail::open_input(holidays_path);
        out.panel.holidays = read_holidays(is, holidays_path);
    }
    out.report.outlier_days = mark_outliers(out.panel, opt.outlier_mads, opt.scheme);
    {
        auto is = detail::open_input(covs_path);
        out.covs = read_covariates(is, covs_path);
    }
    for (const auto& ma : opt.moving_averages) add_moving_average(out.covs, ma);
    return out;
}

} // namespace vcload
