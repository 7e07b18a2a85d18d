#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vcload/error.hpp"

namespace vcload {

enum class BasisKind {
    CubicBSpline,
    CyclicCubicBSpline,
    CubicPolynomial,
    NegatedCubicPolynomial,
};

inline std::string to_string(BasisKind kind) {
    switch (kind) {
    case BasisKind::CubicBSpline: return "cubic_bspline";
    case BasisKind::CyclicCubicBSpline: return "cyclic_cubic_bspline";
    case BasisKind::CubicPolynomial: return "cubic_polynomial";
    case BasisKind::NegatedCubicPolynomial: return "negated_cubic_polynomial";
    }
    return "?";
}

inline BasisKind parse_basis_kind(std::string_view name) {
    for (auto k : {BasisKind::CubicBSpline, BasisKind::CyclicCubicBSpline,
                   BasisKind::CubicPolynomial, BasisKind::NegatedCubicPolynomial}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown basis kind '" + std::string(name) + "'");
}

inline bool is_spline(BasisKind kind) {
    return kind == BasisKind::CubicBSpline || kind == BasisKind::CyclicCubicBSpline;
}

/// Declarative description of one basis family.
///
/// Knot conventions:
///  - CubicBSpline: clamped knot vector of length count + 4 (lo and hi repeated
///    four times, count - 4 equally spaced interior knots).
///  - CyclicCubicBSpline: count + 1 equally spaced breakpoints over the
///    circular domain [lo, hi); the period is hi - lo.
///  - polynomial kinds: no knots, count is always 3 (degrees 1..3).
struct BasisSpec {
    BasisKind kind = BasisKind::CubicBSpline;
    int count = 0;
    double domain_lo = 0.0;
    double domain_hi = 1.0;
    std::vector<double> knots;

    bool operator==(const BasisSpec&) const = default;
};

namespace detail {

inline void check_domain(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw ConfigError("basis domain bounds must be finite");
    }
    if (!(lo < hi)) throw ConfigError("basis domain is empty (lo >= hi)");
}

// Uniform cardinal cubic B-spline supported on [0, 4).
inline double cardinal_cubic(double t) {
    if (t < 0.0 || t >= 4.0) return 0.0;
    if (t < 1.0) return t * t * t / 6.0;
    if (t < 2.0) return (((-3.0 * t + 12.0) * t - 12.0) * t + 4.0) / 6.0;
    if (t < 3.0) return (((3.0 * t - 24.0) * t + 60.0) * t - 44.0) / 6.0;
    const double r = 4.0 - t;
    return r * r * r / 6.0;
}

// Knot span index for the clamped cubic spline (Piegl & Tiller A2.1).
inline int find_span(const std::vector<double>& knots, int count, double x) {
    const int n = count - 1;
    if (x >= knots[n + 1]) return n;
    if (x <= knots[3]) return 3;
    const auto first = knots.begin() + 3;
    const auto last = knots.begin() + n + 2;
    return static_cast<int>(std::upper_bound(first, last, x) - knots.begin()) - 1;
}

} // namespace detail

/// Clamped cubic B-spline spec with equally spaced interior knots over [lo, hi].
inline BasisSpec make_bspline_knots(double lo, double hi, int count) {
    detail::check_domain(lo, hi);
    if (count < 4) throw ConfigError("cubic B-spline needs count >= 4");
    BasisSpec spec{BasisKind::CubicBSpline, count, lo, hi, {}};
    const int interior = count - 4;
    spec.knots.reserve(count + 4);
    for (int i = 0; i < 4; ++i) spec.knots.push_back(lo);
    for (int k = 1; k <= interior; ++k) {
        spec.knots.push_back(lo + (hi - lo) * k / (interior + 1));
    }
    for (int i = 0; i < 4; ++i) spec.knots.push_back(hi);
    return spec;
}

/// Cyclic cubic B-spline spec over the circular domain [lo, hi).
inline BasisSpec make_cyclic_spec(double lo, double hi, int count) {
    detail::check_domain(lo, hi);
    if (count < 3) throw ConfigError("cyclic cubic B-spline needs count >= 3");
    BasisSpec spec{BasisKind::CyclicCubicBSpline, count, lo, hi, {}};
    spec.knots.reserve(count + 1);
    for (int k = 0; k <= count; ++k) spec.knots.push_back(lo + (hi - lo) * k / count);
    return spec;
}

/// Interval-of-day family: cyclic over [1, J + 1) so that interval J wraps onto 1.
inline BasisSpec make_interval_basis(BasisKind kind, int intervals, int count) {
    if (intervals < 2) throw ConfigError("need at least two intervals per day");
    switch (kind) {
    case BasisKind::CyclicCubicBSpline:
        return make_cyclic_spec(1.0, intervals + 1.0, count);
    case BasisKind::CubicBSpline:
        return make_bspline_knots(1.0, static_cast<double>(intervals), count);
    default:
        throw ConfigError("interval basis must be a spline kind");
    }
}

/// Polynomial family (x, x^2, x^3) or ((-x), (-x)^2, (-x)^3). The domain is
/// informational only; polynomial kinds are evaluated without clamping.
inline BasisSpec make_polynomial_spec(BasisKind kind, double lo, double hi) {
    if (kind != BasisKind::CubicPolynomial && kind != BasisKind::NegatedCubicPolynomial) {
        throw ConfigError("not a polynomial basis kind");
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw ConfigError("basis domain bounds must be finite");
    }
    if (!(lo < hi)) hi = lo + 1.0;
    return BasisSpec{kind, 3, lo, hi, {}};
}

/// Builds a covariate basis spec of `kind` spanning the observed range.
inline BasisSpec make_basis(BasisKind kind, double lo, double hi, int count) {
    switch (kind) {
    case BasisKind::CubicBSpline: return make_bspline_knots(lo, hi, count);
    case BasisKind::CyclicCubicBSpline: return make_cyclic_spec(lo, hi, count);
    default:
        if (count != 3) throw ConfigError("polynomial bases have exactly 3 terms");
        return make_polynomial_spec(kind, lo, hi);
    }
}

/// Checks the structural invariants of a (possibly deserialized) spec.
inline void validate(const BasisSpec& spec) {
    switch (spec.kind) {
    case BasisKind::CubicBSpline:
        if (spec.count < 4 || spec.knots.size() != static_cast<std::size_t>(spec.count + 4)) {
            throw ConfigError("malformed cubic B-spline spec");
        }
        break;
    case BasisKind::CyclicCubicBSpline:
        if (spec.count < 3 || spec.knots.size() != static_cast<std::size_t>(spec.count + 1)) {
            throw ConfigError("malformed cyclic B-spline spec");
        }
        break;
    default:
        if (spec.count != 3 || !spec.knots.empty()) {
            throw ConfigError("malformed polynomial spec");
        }
        return;
    }
    detail::check_domain(spec.domain_lo, spec.domain_hi);
    for (std::size_t i = 1; i < spec.knots.size(); ++i) {
        if (spec.knots[i] < spec.knots[i - 1]) throw ConfigError("knots must be nondecreasing");
    }
}

namespace detail {

inline void eval_clamped(const BasisSpec& spec, double x, double* out) {
    x = std::clamp(x, spec.domain_lo, spec.domain_hi);
    std::fill(out, out + spec.count, 0.0);
    const auto& t = spec.knots;
    const int span = find_span(t, spec.count, x);

    // Cox-de Boor triangle for the four nonzero functions on this span.
    double n[4] = {1.0, 0.0, 0.0, 0.0};
    double left[4] = {}, right[4] = {};
    for (int j = 1; j <= 3; ++j) {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    for (int r = 0; r < 4; ++r) out[span - 3 + r] = n[r];
}

inline void eval_cyclic(const BasisSpec& spec, double x, double* out) {
    const double period = spec.domain_hi - spec.domain_lo;
    const int q_count = spec.count;
    double offset = std::fmod(x - spec.domain_lo, period);
    if (offset < 0.0) offset += period;
    const double u = offset * q_count / period;
    for (int q = 0; q < q_count; ++q) {
        // basis q peaks at breakpoint q; wrap its support around the circle
        double d = std::fmod(u - q + 2.0, static_cast<double>(q_count));
        if (d < 0.0) d += q_count;
        double v = 0.0;
        for (double s = d; s < 4.0; s += q_count) v += cardinal_cubic(s);
        out[q] = v;
    }
}

} // namespace detail

/// Evaluates (g_1(x), ..., g_count(x)) into `out` (length spec.count).
inline void eval_basis_into(const BasisSpec& spec, double x, std::span<double> out) {
    if (!std::isfinite(x)) throw EvaluationError("basis evaluated at a non-finite point");
    if (out.size() != static_cast<std::size_t>(spec.count)) {
        throw ShapeError("basis output buffer has wrong length");
    }
    switch (spec.kind) {
    case BasisKind::CubicBSpline:
        detail::eval_clamped(spec, x, out.data());
        return;
    case BasisKind::CyclicCubicBSpline:
        detail::eval_cyclic(spec, x, out.data());
        return;
    case BasisKind::CubicPolynomial:
    case BasisKind::NegatedCubicPolynomial: {
        const double v = spec.kind == BasisKind::CubicPolynomial ? x : -x;
        out[0] = v;
        out[1] = v * v;
        out[2] = v * v * v;
        return;
    }
    }
}

inline Eigen::VectorXd eval_basis(const BasisSpec& spec, double x) {
    Eigen::VectorXd v(spec.count);
    eval_basis_into(spec, x, std::span<double>(v.data(), v.size()));
    return v;
}

/// Number of intervals J covered by a cyclic interval basis built over [1, J + 1).
inline int cyclic_interval_count(const BasisSpec& spec) {
    return static_cast<int>(std::lround(spec.domain_hi - spec.domain_lo));
}

/// Evaluates a cyclic spec at interval index j in 1..J.
inline Eigen::VectorXd eval_cyclic_basis(const BasisSpec& spec, int j) {
    if (spec.kind != BasisKind::CyclicCubicBSpline) {
        throw ConfigError("eval_cyclic_basis needs a cyclic spec");
    }
    const int intervals = cyclic_interval_count(spec);
    if (j < 1 || j > intervals) throw IndexError("interval index out of range");
    return eval_basis(spec, spec.domain_lo + (j - 1));
}

/// Evaluates an interval-of-day family at interval j (1-based) for either
/// spline kind.
inline Eigen::VectorXd eval_interval_basis(const BasisSpec& spec, int j) {
    if (spec.kind == BasisKind::CyclicCubicBSpline) return eval_cyclic_basis(spec, j);
    return eval_basis(spec, static_cast<double>(j));
}

/// Cached evaluations of one family at a set of points.
struct BasisSet {
    BasisSpec spec;
    Eigen::MatrixXd values; // points x count
};

inline BasisSet evaluate(const BasisSpec& spec, std::span<const double> points) {
    BasisSet set{spec, Eigen::MatrixXd(static_cast<Eigen::Index>(points.size()), spec.count)};
    Eigen::VectorXd row(spec.count);
    for (std::size_t i = 0; i < points.size(); ++i) {
        eval_basis_into(spec, points[i], std::span<double>(row.data(), row.size()));
        set.values.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return set;
}

/// Interval family evaluated at j = 1..J, one row per interval.
inline BasisSet evaluate_intervals(const BasisSpec& spec, int intervals) {
    BasisSet set{spec, Eigen::MatrixXd(intervals, spec.count)};
    for (int j = 1; j <= intervals; ++j) {
        set.values.row(j - 1) = eval_interval_basis(spec, j).transpose();
    }
    return set;
}

} // namespace vcload
