#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "vcload/error.hpp"

namespace vcload {

/// Polyhedron {y : A y <= b} of responses that reproduce the NNLS support.
struct SelectionEvent {
    Eigen::MatrixXd A;              // rows: inactive block, then active block
    Eigen::VectorXd b;              // zeros for the NNLS event
    std::vector<int> active_set;
    Eigen::MatrixXd pseudo_inverse; // |S| x n, (X_S^T X_S)^{-1} X_S^T
};

/// One-dimensional slice of the event along eta.
struct TruncationBounds {
    double v_minus = -std::numeric_limits<double>::infinity();
    double v_plus = std::numeric_limits<double>::infinity();
    double eta_y = 0.0;
    Eigen::VectorXd z;
};

struct TruncatedInterval {
    double v_minus = 0.0;
    double v_plus = 0.0;
    Eigen::VectorXd eta;
    double sigma2 = 0.0;   // variance of eta^T y
    double estimate = 0.0; // eta^T y
    double lo = 0.0;
    double hi = 0.0;
    double alpha = 0.05;
};

enum class IntervalKind {
    Mean,       ///< interval for x^T beta_S
    Prediction, ///< adds an independent N(0, sigma^2) observation error
};

inline SelectionEvent selection_event(const Eigen::MatrixXd& X, const std::vector<int>& active_set) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (active_set.empty()) throw InferenceUnavailableError("empty active set: nothing was selected");
    std::vector<char> in(static_cast<std::size_t>(p), 0);
    for (int j : active_set) {
        if (j < 0 || j >= p) throw IndexError("active index out of range");
        in[static_cast<std::size_t>(j)] = 1;
    }
    std::vector<int> inactive;
    for (Eigen::Index j = 0; j < p; ++j)
        if (!in[static_cast<std::size_t>(j)]) inactive.push_back(static_cast<int>(j));

    const auto s = static_cast<Eigen::Index>(active_set.size());
    Eigen::MatrixXd XS(n, s);
    for (Eigen::Index a = 0; a < s; ++a) XS.col(a) = X.col(active_set[static_cast<std::size_t>(a)]);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(XS);
    if (qr.rank() < s) throw InferenceUnavailableError("selected columns are rank deficient");
    const Eigen::LLT<Eigen::MatrixXd> gram((XS.transpose() * XS).eval());

    SelectionEvent ev;
    ev.active_set = active_set;
    ev.pseudo_inverse = gram.solve(XS.transpose());

    const auto k = static_cast<Eigen::Index>(inactive.size());
    ev.A.resize(k + s, n);
    if (k > 0) {
        Eigen::MatrixXd XN(n, k);
        for (Eigen::Index a = 0; a < k; ++a) XN.col(a) = X.col(inactive[static_cast<std::size_t>(a)]);
        // X_N^T (I - X_S X_S^+) <= 0 : inactive duals stay nonnegative
        ev.A.topRows(k) = XN.transpose() - (XN.transpose() * XS) * ev.pseudo_inverse;
    }
    // -X_S^+ y <= 0 : active coefficients stay nonnegative
    ev.A.bottomRows(s) = -ev.pseudo_inverse;
    ev.b = Eigen::VectorXd::Zero(k + s);
    return ev;
}

namespace detail {

// exp(x^2) erfc(x) for x >= 0.
inline double erfcx_nonneg(double x) {
    if (x < 25.0) return std::exp(x * x) * std::erfc(x);
    const double r = 1.0 / (x * x);
    const double series = 1.0 + r * (-0.5 + r * (0.75 + r * (-1.875 + r * 6.5625)));
    return series / (x * std::sqrt(std::numbers::pi));
}

// log of the upper normal tail Q(t) = 1 - Phi(t), t >= 0.
inline double log_upper_tail(double t) {
    if (t == std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
    const double u = t / std::numbers::sqrt2;
    return std::log(0.5 * erfcx_nonneg(u)) - 0.5 * t * t;
}

inline double phi_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

// (Q(x) - Q(a)) / (Q(b) - Q(a)) complement for 0 <= a <= x <= b
inline double right_tail_cdf(double a, double x, double b) {
    const double la = log_upper_tail(a);
    const double num = -std::expm1(log_upper_tail(x) - la);
    const double den = -std::expm1(log_upper_tail(b) - la);
    if (!(den > 0.0)) throw DegenerateTruncationError("truncation interval carries no probability mass");
    return num / den;
}

} // namespace detail

/// CDF at x of N(mu, sigma2) truncated to [a, b] (infinite bounds allowed).
inline double truncnorm_cdf(double x, double mu, double sigma2, double a, double b) {
    if (!(sigma2 > 0.0)) throw ConfigError("truncnorm_cdf: sigma2 must be > 0");
    if (!(a < b)) throw DegenerateTruncationError("truncnorm_cdf: need a < b");
    if (x <= a) return 0.0;
    if (x >= b) return 1.0;
    const double sd = std::sqrt(sigma2);
    const double za = (a - mu) / sd, zx = (x - mu) / sd, zb = (b - mu) / sd;
    if (za >= 0.0) return detail::right_tail_cdf(za, zx, zb);
    if (zb <= 0.0) return 1.0 - detail::right_tail_cdf(-zb, -zx, -za);
    const double pa = detail::phi_cdf(za), pb = detail::phi_cdf(zb);
    const double den = pb - pa;
    if (!(den > 0.0)) throw DegenerateTruncationError("truncation interval carries no probability mass");
    return std::clamp((detail::phi_cdf(zx) - pa) / den, 0.0, 1.0);
}

/// Slice of {A y <= b} through y along eta, for Sigma = sigma2 I.
inline TruncationBounds truncation_bounds(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                          const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    if (A.cols() != eta.size() || eta.size() != y.size() || A.rows() != b.size()) {
        throw ShapeError("truncation_bounds: shape mismatch");
    }
    const double ee = eta.squaredNorm();
    if (!(ee > 0.0)) throw ConfigError("truncation_bounds: eta must be nonzero");
    TruncationBounds tb;
    tb.eta_y = eta.dot(y);
    const Eigen::VectorXd c = eta / ee;
    tb.z = y - c * tb.eta_y;
    const Eigen::VectorXd Ac = A * c;
    const Eigen::VectorXd Az = A * tb.z;
    const double scale = std::max(1.0, Ac.cwiseAbs().maxCoeff());
    const double zero_tol = 1e-13 * scale;
    const double feas_tol = 1e-8 * std::max(1.0, Az.cwiseAbs().maxCoeff());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
        const double slack = b(r) - Az(r);
        if (std::abs(Ac(r)) <= zero_tol) {
            if (slack < -feas_tol) throw NumericalInconsistencyError("selection event slice is empty");
            continue;
        }
        const double v = slack / Ac(r);
        if (Ac(r) < 0.0) tb.v_minus = std::max(tb.v_minus, v);
        else tb.v_plus = std::min(tb.v_plus, v);
    }
    if (tb.v_minus > tb.v_plus) throw NumericalInconsistencyError("selection event slice is empty (v- > v+)");
    return tb;
}

inline TruncationBounds truncation_bounds(const SelectionEvent& ev, const Eigen::VectorXd& eta,
                                          const Eigen::VectorXd& y) {
    return truncation_bounds(ev.A, ev.b, eta, y);
}

/// Confidence interval for the mean of a truncated normal observation:
/// lo solves F_lo(estimate) = 1 - alpha/2 and hi solves F_hi(estimate) =
/// alpha/2 (F is decreasing in its mean).
inline TruncatedInterval interval_from_bounds(double estimate, double sigma2, double v_minus,
                                              double v_plus, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be > 0");
    // keep the observation inside its own slice despite rounding
    const double sd = std::sqrt(sigma2);
    const double slack = 1e-12 * (std::abs(estimate) + sd);
    if (estimate < v_minus - slack || estimate > v_plus + slack) {
        throw NumericalInconsistencyError("estimate lies outside its truncation slice");
    }
    const double x = std::clamp(estimate, v_minus, v_plus);

    auto cdf = [&](double mu) { return truncnorm_cdf(x, mu, sigma2, v_minus, v_plus); };
    auto solve_for = [&](double target) {
        // cdf(mu) is decreasing; find lo_mu with cdf >= target and hi_mu with cdf <= target
        double step = sd;
        double lo_mu = x - step, hi_mu = x + step;
        int expansions = 0;
        while (cdf(lo_mu) < target) {
            if (++expansions > 200) throw IntervalUnavailableError("root bracket failed (lower side)");
            step *= 2.0;
            lo_mu = x - step;
        }
        step = sd;
        expansions = 0;
        while (cdf(hi_mu) > target) {
            if (++expansions > 200) throw IntervalUnavailableError("root bracket failed (upper side)");
            step *= 2.0;
            hi_mu = x + step;
        }
        for (int it = 0; it < 300; ++it) {
            const double mid = 0.5 * (lo_mu + hi_mu);
            if (mid <= lo_mu || mid >= hi_mu) break;
            (cdf(mid) >= target ? lo_mu : hi_mu) = mid;
        }
        return 0.5 * (lo_mu + hi_mu);
    };

    TruncatedInterval out;
    out.v_minus = v_minus;
    out.v_plus = v_plus;
    out.sigma2 = sigma2;
    out.estimate = estimate;
    out.alpha = alpha;
    out.lo = solve_for(1.0 - alpha / 2.0);
    out.hi = solve_for(alpha / 2.0);
    return out;
}

/// Pivot F^{[v-, v+]}_{mean, sigma2}(eta^T y); Uniform(0, 1) under the truth.
inline double selective_pivot(const TruncationBounds& tb, double mean, double sigma2) {
    const double x = std::clamp(tb.eta_y, tb.v_minus, tb.v_plus);
    return truncnorm_cdf(x, mean, sigma2, tb.v_minus, tb.v_plus);
}

/// Post-selection interval for x_new^T beta_S where beta_S is the least
/// squares refit on the selected columns. `x_new` is given in selected-column
/// coordinates (length |S|). For IntervalKind::Prediction the response is
/// extended by an unobserved N(0, sigma2) error with eta = (eta^T, 1)^T.
inline TruncatedInterval selective_interval(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const std::vector<int>& active_set,
                                            const Eigen::VectorXd& x_new, double sigma2, double alpha,
                                            IntervalKind kind = IntervalKind::Mean) {
    if (X.rows() != y.size()) throw ShapeError("selective_interval: X and y lengths differ");
    if (x_new.size() != static_cast<Eigen::Index>(active_set.size())) {
        throw ShapeError("x_new must be expressed in selected-column coordinates");
    }
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InferenceUnavailableError("sigma2 must be finite and > 0");
    const SelectionEvent ev = selection_event(X, active_set);
    Eigen::VectorXd eta = ev.pseudo_inverse.transpose() * x_new;
    if (!(eta.squaredNorm() > 0.0)) throw InferenceUnavailableError("x_new gives a zero contrast");

    TruncationBounds tb;
    double eta_norm2 = eta.squaredNorm();
    if (kind == IntervalKind::Mean) {
        tb = truncation_bounds(ev, eta, y);
    } else {
        const Eigen::Index n = y.size();
        Eigen::MatrixXd A_ext = Eigen::MatrixXd::Zero(ev.A.rows(), n + 1);
        A_ext.leftCols(n) = ev.A;
        Eigen::VectorXd eta_ext(n + 1), y_ext(n + 1);
        eta_ext << eta, 1.0;
        y_ext << y, 0.0; // the new error enters at its mean
        tb = truncation_bounds(A_ext, ev.b, eta_ext, y_ext);
        eta = eta_ext;
        eta_norm2 += 1.0;
    }
    TruncatedInterval out = interval_from_bounds(tb.eta_y, sigma2 * eta_norm2, tb.v_minus, tb.v_plus, alpha);
    out.eta = std::move(eta);
    return out;
}

} // namespace vcload
