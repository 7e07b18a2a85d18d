#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcload/basis.hpp"
#include "vcload/calendar.hpp"
#include "vcload/error.hpp"
#include "vcload/panel.hpp"
#include "vcload/weights.hpp"

namespace vcload {

/// Which days count as "previous days" for the alpha terms.
enum class LagIndexing {
    SameClass, ///< t-th previous day of the same day class
    Calendar,  ///< t-th previous calendar day
};

inline std::string to_string(LagIndexing l) { return l == LagIndexing::SameClass ? "same_class" : "calendar"; }

inline LagIndexing parse_lag_indexing(std::string_view name) {
    if (name == "same_class") return LagIndexing::SameClass;
    if (name == "calendar") return LagIndexing::Calendar;
    throw ConfigError("unknown lag indexing '" + std::string(name) + "'");
}

/// One daily covariate with its own basis family g_m.
struct CovariateGroup {
    std::string name;
    BasisSpec spec;

    bool operator==(const CovariateGroup&) const = default;
};

/// Everything that fixes the layout of the regression system.
struct DesignSpec {
    std::vector<CovariateGroup> groups;
    BasisSpec interval_basis; // h_q
    WeightScheme weights;
    DayClassScheme scheme = DayClassScheme::PerWeekday;
    LagIndexing lags = LagIndexing::SameClass;

    int Q() const { return interval_basis.count; }
    int M_total() const {
        int m = 0;
        for (const auto& g : groups) m += g.spec.count;
        return m;
    }
    /// First column of g belonging to group k.
    int group_offset(std::size_t k) const {
        int m = 0;
        for (std::size_t i = 0; i < k; ++i) m += groups[i].spec.count;
        return m;
    }
    int columns() const { return Q() * M_total(); }

    bool operator==(const DesignSpec&) const = default;
};

struct DesignRow {
    Date date{};
    int interval = 0; // 1-based j
    Eigen::Index panel_row = 0;
};

struct DesignColumn {
    int q = 0;     // 0-based
    int m = 0;     // 0-based, within the whole concatenated g
    int group = 0;
};

/// Response and design of the linear model y_tilde = X gamma + e, with
/// gamma = vec(Gamma) (Gamma is Q x M_total, column-major).
struct DesignSystem {
    Eigen::VectorXd y_tilde;
    Eigen::MatrixXd X;
    std::vector<DesignRow> row_index;
    std::vector<DesignColumn> col_index;
    Eigen::VectorXd q_offsets; // past-load part removed from y
};

/// Concatenated covariate basis vector g(s_d) for date d, or nullopt when a
/// covariate is unavailable.
inline std::optional<Eigen::VectorXd> covariate_basis(const DesignSpec& spec,
                                                      const CovariateTable& covs,
                                                      const std::vector<int>& columns, Date d) {
    Eigen::VectorXd g(spec.M_total());
    int off = 0;
    for (std::size_t k = 0; k < spec.groups.size(); ++k) {
        const double s = covs.value(d, columns[k]);
        if (!std::isfinite(s)) return std::nullopt;
        const int m = spec.groups[k].spec.count;
        eval_basis_into(spec.groups[k].spec, s, std::span<double>(g.data() + off, m));
        off += m;
    }
    return g;
}

/// Same vector from explicit covariate values (one per group).
inline Eigen::VectorXd covariate_basis(const DesignSpec& spec, std::span<const double> s) {
    if (s.size() != spec.groups.size()) throw ShapeError("one covariate value per group expected");
    Eigen::VectorXd g(spec.M_total());
    int off = 0;
    for (std::size_t k = 0; k < spec.groups.size(); ++k) {
        const int m = spec.groups[k].spec.count;
        eval_basis_into(spec.groups[k].spec, s[k], std::span<double>(g.data() + off, m));
        off += m;
    }
    return g;
}

inline std::vector<int> covariate_columns(const DesignSpec& spec, const CovariateTable& covs) {
    std::vector<int> cols;
    for (const auto& g : spec.groups) cols.push_back(covs.column(g.name));
    return cols;
}

/// Date of the k-th (k >= 1) previous day of `target` under the lag rule.
/// Returns nullopt if the walk leaves the range covered by the panel.
inline std::optional<Date> lag_date(const LoadPanel& panel, Date target, int k, LagIndexing lags,
                                    DayClassScheme scheme) {
    if (lags == LagIndexing::Calendar) {
        const Date d = add_days(target, -k);
        if (d < panel.first_date) return std::nullopt;
        return d;
    }
    const int cls = panel.class_of(target, scheme);
    Date d = target;
    int found = 0;
    while (found < k) {
        d = add_days(d, -1);
        if (d < panel.first_date) return std::nullopt;
        if (panel.class_of(d, scheme) == cls) ++found;
    }
    return d;
}

/// Lag days used by the alpha terms of `target`: element t-1 is the date of
/// day lag t + L_alpha. Returns nullopt when any lag day is outside the
/// panel, invalid, or lacks covariates; `missing` then lists the offending
/// dates (or is left empty if history runs off the start of the panel).
inline std::optional<std::vector<Date>> day_lag_dates(const DesignSpec& spec,
                                                      const LoadPanel& panel,
                                                      const CovariateTable& covs,
                                                      const std::vector<int>& columns,
                                                      Date target,
                                                      std::vector<Date>* missing = nullptr) {
    const auto& w = spec.weights;
    std::vector<Date> out;
    out.reserve(static_cast<std::size_t>(w.T));
    bool ok = true;
    for (int t = 1; t <= w.T; ++t) {
        const auto d = lag_date(panel, target, t + w.L_alpha, spec.lags, spec.scheme);
        if (!d) return std::nullopt;
        const auto row = panel.row_of(*d);
        const bool usable = row && panel.is_valid(*row) &&
                            covariate_basis(spec, covs, columns, *d).has_value();
        if (!usable) {
            ok = false;
            if (missing) missing->push_back(*d);
        }
        out.push_back(*d);
    }
    if (!ok) return std::nullopt;
    return out;
}

/// Effective past-load weights for interval j: day weights parallel to
/// alpha, and (interval_offset, weight) pairs for the within-day terms that
/// survive. Within-day lags that fall before interval 1 or are not observed
/// are dropped and the remaining beta weights renormalized.
struct RowWeights {
    std::vector<double> day;
    std::vector<std::pair<int, double>> within; // (source interval, weight)
};

template <class Observed>
RowWeights row_weights(const WeightScheme& w, int j, Observed&& observed) {
    RowWeights rw;
    double beta_sum = 0.0;
    for (int u = 1; u <= w.U; ++u) {
        const int src = j - u - w.L_beta;
        if (src >= 1 && observed(src)) {
            rw.within.emplace_back(src, w.beta[static_cast<std::size_t>(u - 1)]);
            beta_sum += w.beta[static_cast<std::size_t>(u - 1)];
        }
    }
    const double day_share = rw.within.empty() ? 1.0 : 1.0 - w.intraday_share;
    for (double a : w.alpha) rw.day.push_back(day_share * a);
    for (auto& [src, b] : rw.within) b = w.intraday_share * b / beta_sum;
    return rw;
}

/// Assembles the regression system for rows whose target day belongs to
/// `day_class_filter` (all rows when nullopt).
inline DesignSystem assemble(const LoadPanel& panel, const CovariateTable& covs,
                             const DesignSpec& spec, std::optional<int> day_class_filter,
                             std::optional<Date> train_end = std::nullopt) {
    const int J = panel.intervals();
    const int Q = spec.Q();
    const int M = spec.M_total();
    if (Q < 1 || M < 1) throw ConfigError("design needs at least one basis function");
    if (spec.interval_basis.kind == BasisKind::CyclicCubicBSpline &&
        cyclic_interval_count(spec.interval_basis) != J) {
        throw AlignmentError("interval basis period does not match the panel's J");
    }
    if (static_cast<Eigen::Index>(panel.valid.size()) != panel.days()) {
        throw AlignmentError("panel validity mask length differs from its row count");
    }
    const auto columns = covariate_columns(spec, covs);
    if (covs.days() == 0 || covs.first_date >= panel.end_date() ||
        covs.date(covs.days()) <= panel.first_date) {
        throw AlignmentError("covariate calendar does not overlap the load panel");
    }

    const Eigen::MatrixXd H = evaluate_intervals(spec.interval_basis, J).values; // J x Q

    std::vector<Eigen::VectorXd> rows_x;
    std::vector<double> ys, qs;
    DesignSystem sys;
    const Eigen::Index last = train_end
        ? std::min<Eigen::Index>(panel.days(), std::max<long>(0, days_between(panel.first_date, *train_end)))
        : panel.days();
    for (Eigen::Index i = 0; i < last; ++i) {
        const Date d = panel.date(i);
        if (!panel.is_valid(i)) continue;
        if (day_class_filter && panel.class_of(d, spec.scheme) != *day_class_filter) continue;
        const auto g = covariate_basis(spec, covs, columns, d);
        if (!g) continue;
        const auto lags = day_lag_dates(spec, panel, covs, columns, d);
        if (!lags) continue;

        std::vector<Eigen::Index> lag_rows;
        std::vector<Eigen::VectorXd> lag_g;
        for (const Date ld : *lags) {
            lag_rows.push_back(*panel.row_of(ld));
            lag_g.push_back(*covariate_basis(spec, covs, columns, ld));
        }

        for (int j = 1; j <= J; ++j) {
            const auto rw = row_weights(spec.weights, j, [](int) { return true; });
            double q = 0.0;
            Eigen::VectorXd g_past = Eigen::VectorXd::Zero(M);
            for (std::size_t t = 0; t < rw.day.size(); ++t) {
                q += rw.day[t] * panel.loads(lag_rows[t], j - 1);
                g_past += rw.day[t] * lag_g[t];
            }
            Eigen::VectorXd h_past = Eigen::VectorXd::Zero(Q);
            for (const auto& [src, b] : rw.within) {
                q += b * panel.loads(i, src - 1);
                h_past += b * H.row(src - 1).transpose();
            }
            const Eigen::VectorXd h = H.row(j - 1).transpose();
            // g (x) h - g_past (x) h - g (x) h_past, Kronecker index m * Q + q
            Eigen::VectorXd x(Q * M);
            for (int m = 0; m < M; ++m) {
                x.segment(m * Q, Q) = ((*g)(m) - g_past(m)) * h - (*g)(m) * h_past;
            }
            rows_x.push_back(std::move(x));
            ys.push_back(panel.loads(i, j - 1) - q);
            qs.push_back(q);
            sys.row_index.push_back({d, j, i});
        }
    }
    if (rows_x.empty()) {
        std::string what = "no usable rows for the design";
        if (day_class_filter) what += " (day class " + day_class_name(*day_class_filter, spec.scheme) + ")";
        throw EmptyDesignError(what);
    }

    const auto n = static_cast<Eigen::Index>(rows_x.size());
    sys.X.resize(n, Q * M);
    sys.y_tilde.resize(n);
    sys.q_offsets.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        sys.X.row(r) = rows_x[static_cast<std::size_t>(r)].transpose();
        sys.y_tilde(r) = ys[static_cast<std::size_t>(r)];
        sys.q_offsets(r) = qs[static_cast<std::size_t>(r)];
    }
    for (std::size_t k = 0; k < spec.groups.size(); ++k) {
        const int off = spec.group_offset(k);
        for (int m = 0; m < spec.groups[k].spec.count; ++m) {
            for (int q = 0; q < Q; ++q) sys.col_index.push_back({q, off + m, static_cast<int>(k)});
        }
    }
    return sys;
}

/// Checks vec(A B C^T) == (C kron A) vec(B) to `tol` (max abs difference).
inline bool kron_vec_check(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& C, double tol = 1e-12) {
    if (A.cols() != B.rows() || B.cols() != C.cols()) {
        throw ShapeError("kron_vec_check: nonconformable shapes");
    }
    const Eigen::MatrixXd lhs_m = A * B * C.transpose();
    const Eigen::VectorXd lhs = Eigen::Map<const Eigen::VectorXd>(lhs_m.data(), lhs_m.size());
    Eigen::MatrixXd K(C.rows() * A.rows(), C.cols() * A.cols());
    for (Eigen::Index r = 0; r < C.rows(); ++r) {
        for (Eigen::Index c = 0; c < C.cols(); ++c) {
            K.block(r * A.rows(), c * A.cols(), A.rows(), A.cols()) = C(r, c) * A;
        }
    }
    const Eigen::VectorXd rhs = K * Eigen::Map<const Eigen::VectorXd>(B.data(), B.size());
    return (lhs - rhs).cwiseAbs().maxCoeff() <= tol;
}

} // namespace vcload
