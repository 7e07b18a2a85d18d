#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "vcload/error.hpp"

namespace vcload {

enum class WeightKind { Mean, AR1 };

inline std::string to_string(WeightKind kind) { return kind == WeightKind::Mean ? "mean" : "ar1"; }

inline WeightKind parse_weight_kind(std::string_view name) {
    if (name == "mean") return WeightKind::Mean;
    if (name == "ar1") return WeightKind::AR1;
    throw ConfigError("unknown weight kind '" + std::string(name) + "'");
}

/// Past-load weights. alpha weighs the same interval on previous days, beta
/// weighs earlier intervals of the same day (intraday only, U > 0).
///
/// When both families are present they are mixed as (1 - intraday_share) *
/// alpha and intraday_share * beta so that the combined weights still form a
/// weighted average of past loads.
struct WeightScheme {
    WeightKind kind = WeightKind::Mean;
    int T = 1;
    int U = 0;
    int L_alpha = 1;
    int L_beta = 1;
    std::vector<double> alpha;
    std::vector<double> beta;
    double intraday_share = 0.5;

    bool operator==(const WeightScheme&) const = default;
};

/// Root in (0, 1] of sum_{t=1}^{T} rho^t = 1, i.e. rho^{T+1} - 2 rho + 1 = 0
/// with the spurious rho = 1 factor removed. T = 1 has no root inside (0, 1)
/// and returns 1, which makes the AR(1) scheme coincide with the mean scheme.
inline double solve_ar1_rho(int T) {
    if (T < 1) throw ConfigError("AR(1) weights need T >= 1");
    if (T == 1) return 1.0;
    auto excess = [T](double rho) {
        double s = 0.0, p = 1.0;
        for (int t = 1; t <= T; ++t) {
            p *= rho;
            s += p;
        }
        return s - 1.0;
    };
    // excess is increasing on (0, 1) with excess(0) = -1 and excess(1) = T - 1
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (excess(mid) < 0.0 ? lo : hi) = mid;
    }
    return std::abs(excess(lo)) <= std::abs(excess(hi)) ? lo : hi;
}

namespace detail {

inline std::vector<double> make_family(WeightKind kind, int count) {
    std::vector<double> w(static_cast<std::size_t>(count));
    if (count == 0) return w;
    if (kind == WeightKind::Mean) {
        for (auto& v : w) v = 1.0 / count;
        return w;
    }
    const double rho = solve_ar1_rho(count);
    double p = 1.0;
    for (auto& v : w) {
        p *= rho;
        v = p;
    }
    return w;
}

} // namespace detail

inline WeightScheme build_weights(WeightKind kind, int T, int U, int L_alpha, int L_beta,
                                  double intraday_share = 0.5) {
    if (T < 1) throw ConfigError("T must be >= 1");
    if (U < 0) throw ConfigError("U must be >= 0");
    if (L_alpha < 0 || L_beta < 0) throw ConfigError("lags must be nonnegative");
    if (!(intraday_share > 0.0 && intraday_share < 1.0)) {
        throw ConfigError("intraday_share must lie in (0, 1)");
    }
    WeightScheme w;
    w.kind = kind;
    w.T = T;
    w.U = U;
    w.L_alpha = L_alpha;
    w.L_beta = L_beta;
    w.alpha = detail::make_family(kind, T);
    w.beta = detail::make_family(kind, U);
    w.intraday_share = intraday_share;
    return w;
}

} // namespace vcload
