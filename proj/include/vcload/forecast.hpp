#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcload/basis.hpp"
#include "vcload/calendar.hpp"
#include "vcload/design.hpp"
#include "vcload/error.hpp"
#include "vcload/inference.hpp"
#include "vcload/panel.hpp"
#include "vcload/solver.hpp"
#include "vcload/weights.hpp"

namespace vcload {

struct CovariateConfig {
    std::string name;
    BasisKind kind = BasisKind::CubicBSpline;
    int count = 5; // M for this covariate (3 for polynomial kinds)

    bool operator==(const CovariateConfig&) const = default;
};

struct ModelConfig {
    int Q = 5;
    BasisKind interval_kind = BasisKind::CyclicCubicBSpline;
    std::vector<CovariateConfig> covariates{{"temperature", BasisKind::CubicBSpline, 5}};
    WeightKind weight_kind = WeightKind::AR1;
    int T = 2;
    int U = 0;
    int L_alpha = 1;
    int L_beta = 1;
    double intraday_share = 0.5;
    double lambda = 1e-3;
    SolveMethod method = SolveMethod::NNLS;
    DayClassScheme scheme = DayClassScheme::PerWeekday;
    LagIndexing lags = LagIndexing::SameClass;
    double tol = 1e-10;

    bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
    if (c.covariates.empty()) throw ConfigError("at least one covariate is required");
    if (c.Q < (c.interval_kind == BasisKind::CyclicCubicBSpline ? 3 : 4)) throw ConfigError("Q below the basis minimum");
    if (!is_spline(c.interval_kind)) throw ConfigError("interval basis must be a spline kind");
    for (const auto& cov : c.covariates) {
        if (is_spline(cov.kind)) {
            if (cov.count < (cov.kind == BasisKind::CyclicCubicBSpline ? 3 : 4)) {
                throw ConfigError("covariate '" + cov.name + "': M below the basis minimum");
            }
        } else if (cov.count != 3) {
            throw ConfigError("covariate '" + cov.name + "': polynomial bases have exactly 3 terms");
        }
    }
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (c.T < 1 || c.U < 0 || c.L_alpha < 0 || c.L_beta < 0) throw ConfigError("invalid lag configuration");
}

/// Coefficients of one day-class model.
struct ClassFit {
    int day_class = 0;
    Eigen::MatrixXd gamma;       // Q x M_total
    std::vector<int> active_set; // indices into vec(Gamma)
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
    Eigen::Index rows = 0;
    double objective = 0.0;
};

/// Immutable result of fit(): frozen bases plus one Gamma per day class.
struct FittedModel {
    ModelConfig config;
    DesignSpec design;
    int intervals = 0;
    Date train_first{};
    Date train_end{}; // exclusive
    std::uint64_t window_hash = 0;
    std::map<int, ClassFit> classes;

    const ClassFit& class_fit(int cls) const {
        const auto it = classes.find(cls);
        if (it == classes.end()) {
            throw ForecastError("no fitted model for day class " + day_class_name(cls, config.scheme));
        }
        return it->second;
    }
};

struct ForecastInterval {
    double lo = 0.0;
    double hi = 0.0;
    double alpha = 0.05;
};

struct ForecastPoint {
    Date date{};
    int interval = 0;
    double y_hat = 0.0;
    double mu_hat = 0.0;
    double b_total = 0.0;
    std::vector<double> b_groups;
    std::optional<ForecastInterval> band;
};

struct ForecastBundle {
    std::vector<std::string> group_names;
    std::vector<ForecastPoint> points;
};

namespace detail {

inline std::vector<int> hash_columns(const DesignSpec& spec, const CovariateTable& covs) {
    return covariate_columns(spec, covs);
}

// Training window [first valid row, train_end).
inline std::pair<Date, Date> training_window(const LoadPanel& panel, std::optional<Date> train_end) {
    const Date end = train_end ? std::min(*train_end, panel.end_date()) : panel.end_date();
    return {panel.first_date, end};
}

} // namespace detail

/// Builds the frozen design layout: covariate knots span the observed
/// covariate range over valid training days.
inline DesignSpec make_design_spec(const LoadPanel& panel, const CovariateTable& covs,
                                   const ModelConfig& config, std::optional<Date> train_end = std::nullopt) {
    validate(config);
    const auto [first, end] = detail::training_window(panel, train_end);
    DesignSpec spec;
    spec.scheme = config.scheme;
    spec.lags = config.lags;
    spec.weights = build_weights(config.weight_kind, config.T, config.U, config.L_alpha, config.L_beta,
                                 config.intraday_share);
    spec.interval_basis = make_interval_basis(config.interval_kind, panel.intervals(), config.Q);
    for (const auto& cov : config.covariates) {
        const int col = covs.column(cov.name);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Date d = first; d < end; d = add_days(d, 1)) {
            const auto row = panel.row_of(d);
            if (!row || !panel.is_valid(*row)) continue;
            const double s = covs.value(d, col);
            if (!std::isfinite(s)) continue;
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        if (!std::isfinite(lo)) throw FitError("covariate '" + cov.name + "' has no observed values in the training window");
        if (!(lo < hi)) {
            lo -= 0.5;
            hi += 0.5;
        }
        spec.groups.push_back({cov.name, make_basis(cov.kind, lo, hi, cov.count)});
    }
    return spec;
}

/// Design for one day class of a fitted model, built with the frozen specs.
inline DesignSystem training_design(const FittedModel& model, const LoadPanel& panel,
                                    const CovariateTable& covs, int cls) {
    return assemble(panel, covs, model.design, cls, model.train_end);
}

/// Fits one day-class model given a frozen layout.
inline ClassFit fit_class(const DesignSystem& sys, const ModelConfig& config, int cls, int Q) {
    SolveOptions opts;
    opts.method = config.method;
    opts.lambda = config.lambda;
    opts.tol = config.tol;
    const Solution sol = solve(sys.X, sys.y_tilde, opts);

    ClassFit cf;
    cf.day_class = cls;
    cf.rows = sys.X.rows();
    cf.objective = sol.objective;
    cf.active_set = sol.active_set;
    const Eigen::Index M = sys.X.cols() / Q;
    cf.gamma = Eigen::Map<const Eigen::MatrixXd>(sol.gamma.data(), Q, M);

    // residual variance of the least squares refit on the selected columns;
    // for NNLS the active-set solution already is that refit
    const Eigen::VectorXd resid = sys.y_tilde - sys.X * sol.gamma;
    const Eigen::Index dof = cf.rows - static_cast<Eigen::Index>(sol.active_set.size());
    if (dof > 0) cf.sigma2 = resid.squaredNorm() / static_cast<double>(dof);
    return cf;
}

/// Fits one model per day class. `train_end` (exclusive) limits the data;
/// `only_classes` restricts which classes are fitted (all classes otherwise).
inline FittedModel fit(const LoadPanel& panel, const CovariateTable& covs, const ModelConfig& config,
                       std::optional<Date> train_end = std::nullopt,
                       std::optional<std::vector<int>> only_classes = std::nullopt) {
    FittedModel model;
    model.config = config;
    model.design = make_design_spec(panel, covs, config, train_end);
    model.intervals = panel.intervals();
    const auto [first, end] = detail::training_window(panel, train_end);
    model.train_first = first;
    model.train_end = end;
    model.window_hash = training_window_hash(panel, covs, detail::hash_columns(model.design, covs), first, end);

    std::vector<int> classes;
    if (only_classes) classes = *only_classes;
    else for (int c = 0; c < day_class_count(config.scheme); ++c) classes.push_back(c);

    for (int cls : classes) {
        DesignSystem sys;
        try {
            sys = training_design(model, panel, covs, cls);
        } catch (const EmptyDesignError&) {
            throw FitError("empty design for day class " + day_class_name(cls, config.scheme));
        }
        model.classes.emplace(cls, fit_class(sys, config, cls, config.Q));
    }
    return model;
}

/// b(j) = h(j)^T Gamma g(s) for j = 1..J.
inline Eigen::VectorXd weather_effect_curve(const FittedModel& model, int cls, std::span<const double> s) {
    const ClassFit& cf = model.class_fit(cls);
    const Eigen::MatrixXd H = evaluate_intervals(model.design.interval_basis, model.intervals).values;
    return H * (cf.gamma * covariate_basis(model.design, s));
}

/// Per-group effect curves, one column per covariate group (J x groups).
inline Eigen::MatrixXd weather_effect_by_group(const FittedModel& model, int cls, std::span<const double> s) {
    const ClassFit& cf = model.class_fit(cls);
    const Eigen::MatrixXd H = evaluate_intervals(model.design.interval_basis, model.intervals).values;
    const Eigen::VectorXd g = covariate_basis(model.design, s);
    Eigen::MatrixXd out(model.intervals, static_cast<Eigen::Index>(model.design.groups.size()));
    for (std::size_t k = 0; k < model.design.groups.size(); ++k) {
        const int off = model.design.group_offset(k);
        const int m = model.design.groups[k].spec.count;
        out.col(static_cast<Eigen::Index>(k)) = H * (cf.gamma.middleCols(off, m) * g.segment(off, m));
    }
    return out;
}

/// Varying coefficient curves beta_m(j) = sum_q gamma_qm h_q(j) (J x M_total).
inline Eigen::MatrixXd coefficient_curves(const FittedModel& model, int cls) {
    const Eigen::MatrixXd H = evaluate_intervals(model.design.interval_basis, model.intervals).values;
    return H * model.class_fit(cls).gamma;
}

namespace detail {

inline std::vector<double> covariates_on(const FittedModel& model, const CovariateTable& covs, Date d) {
    std::vector<double> s;
    for (const auto& g : model.design.groups) s.push_back(covs.value(d, covs.column(g.name)));
    return s;
}

inline std::string join_dates(const std::vector<Date>& dates) {
    std::string out;
    for (const Date d : dates) {
        if (!out.empty()) out += ",";
        out += format_date(d);
    }
    return out;
}

// Shared forecast path. `today` carries already observed loads of the target
// day (intraday); empty for day-ahead.
inline ForecastBundle predict_impl(const FittedModel& model, const LoadPanel& history,
                                   const CovariateTable& covs, Date target, std::span<const double> s_target,
                                   std::span<const double> today) {
    if (history.intervals() != model.intervals) throw AlignmentError("history has a different J than the model");
    const auto& spec = model.design;
    const int cls = history.class_of(target, spec.scheme);
    const ClassFit& cf = model.class_fit(cls);
    const auto columns = covariate_columns(spec, covs);

    std::vector<Date> missing;
    const auto lags = day_lag_dates(spec, history, covs, columns, target, &missing);
    if (!lags) {
        if (missing.empty()) throw ForecastError("insufficient history before " + format_date(target));
        throw ForecastError("insufficient history before " + format_date(target) +
                            "; missing or invalid: " + join_dates(missing));
    }
    for (double v : s_target) {
        if (!std::isfinite(v)) throw ForecastError("covariate for " + format_date(target) + " is not finite");
    }

    const Eigen::MatrixXd by_group = weather_effect_by_group(model, cls, s_target);
    const Eigen::VectorXd b_target = by_group.rowwise().sum();
    std::vector<Eigen::VectorXd> b_lags;
    std::vector<Eigen::Index> lag_rows;
    for (const Date d : *lags) {
        const auto s = covariates_on(model, covs, d);
        b_lags.push_back(weather_effect_curve(model, cls, s));
        lag_rows.push_back(*history.row_of(d));
    }

    ForecastBundle out;
    for (const auto& g : spec.groups) out.group_names.push_back(g.name);
    const int J = model.intervals;
    for (int j = 1; j <= J; ++j) {
        auto observed = [&](int src) {
            return !today.empty() && std::isfinite(today[static_cast<std::size_t>(src - 1)]);
        };
        const RowWeights rw = row_weights(spec.weights, j, observed);
        double mu = 0.0;
        for (std::size_t t = 0; t < rw.day.size(); ++t) {
            mu += rw.day[t] * (history.loads(lag_rows[t], j - 1) - b_lags[t](j - 1));
        }
        for (const auto& [src, w] : rw.within) {
            mu += w * (today[static_cast<std::size_t>(src - 1)] - b_target(src - 1));
        }
        ForecastPoint pt;
        pt.date = target;
        pt.interval = j;
        pt.mu_hat = mu;
        double b = 0.0;
        for (Eigen::Index k = 0; k < by_group.cols(); ++k) {
            pt.b_groups.push_back(by_group(j - 1, k));
            b += by_group(j - 1, k);
        }
        pt.b_total = b;
        pt.y_hat = pt.mu_hat + pt.b_total;
        out.points.push_back(std::move(pt));
    }
    (void)cf;
    return out;
}

} // namespace detail

/// Day-ahead forecast of `target` from history strictly before it.
/// `s_next` holds one covariate value per group (the forecast-day input).
inline ForecastBundle predict_day_ahead(const FittedModel& model, const LoadPanel& history,
                                        const CovariateTable& covs, Date target,
                                        std::span<const double> s_next) {
    return detail::predict_impl(model, history, covs, target, s_next, {});
}

inline ForecastBundle predict_day_ahead(const FittedModel& model, const LoadPanel& history,
                                        const CovariateTable& covs, Date target) {
    const auto s = detail::covariates_on(model, covs, target);
    return predict_day_ahead(model, history, covs, target, s);
}

/// Intraday forecast: `todays_loads` (length J, NaN when not yet observed)
/// feeds the within-day terms.
inline ForecastBundle predict_intraday(const FittedModel& model, const LoadPanel& history,
                                       const CovariateTable& covs, Date target,
                                       std::span<const double> todays_loads, std::span<const double> s_today) {
    if (model.design.weights.U < 1) throw ModeError("model has U = 0; use the day-ahead forecast");
    if (todays_loads.size() != static_cast<std::size_t>(model.intervals)) {
        throw ShapeError("today's loads must have one entry per interval");
    }
    return detail::predict_impl(model, history, covs, target, s_today, todays_loads);
}

/// Forecasts `days` consecutive days starting at `first`, feeding each
/// forecast back as pseudo-history for the next day.
inline std::vector<ForecastBundle> predict_horizon(const FittedModel& model, const LoadPanel& history,
                                                   const CovariateTable& covs, Date first, int days) {
    LoadPanel work = truncate_before(history, first);
    const long gap = days_between(work.end_date(), first);
    if (gap > 0) {
        // pad missing days so the forecast rows land at the right dates
        const Eigen::Index old = work.days();
        work.loads.conservativeResize(old + gap, Eigen::NoChange);
        work.loads.bottomRows(gap).setConstant(kMissing);
        work.valid.resize(static_cast<std::size_t>(old + gap), false);
    }
    std::vector<ForecastBundle> out;
    for (int k = 0; k < days; ++k) {
        const Date d = add_days(first, k);
        ForecastBundle b = predict_day_ahead(model, work, covs, d);
        const Eigen::Index row = work.days();
        work.loads.conservativeResize(row + 1, Eigen::NoChange);
        for (const auto& pt : b.points) work.loads(row, pt.interval - 1) = pt.y_hat;
        work.valid.push_back(true);
        out.push_back(std::move(b));
    }
    return out;
}

/// Design row and offset for forecasting interval j of `target`; the
/// forecast equals offset + x^T vec(Gamma).
struct ForecastRow {
    double offset = 0.0;
    Eigen::VectorXd x;
};

inline std::vector<ForecastRow> forecast_design_rows(const FittedModel& model, const LoadPanel& history,
                                                     const CovariateTable& covs, Date target,
                                                     std::span<const double> s_target) {
    const auto& spec = model.design;
    const auto columns = covariate_columns(spec, covs);
    const auto lags = day_lag_dates(spec, history, covs, columns, target);
    if (!lags) throw ForecastError("insufficient history before " + format_date(target));
    const Eigen::VectorXd g = covariate_basis(spec, s_target);
    Eigen::VectorXd g_past = Eigen::VectorXd::Zero(spec.M_total());
    const Eigen::MatrixXd H = evaluate_intervals(spec.interval_basis, model.intervals).values;
    const int Q = spec.Q(), M = spec.M_total();
    std::vector<ForecastRow> rows;
    for (int j = 1; j <= model.intervals; ++j) {
        const RowWeights rw = row_weights(spec.weights, j, [](int) { return false; });
        ForecastRow fr;
        g_past.setZero();
        for (std::size_t t = 0; t < rw.day.size(); ++t) {
            const Date d = (*lags)[t];
            fr.offset += rw.day[t] * history.loads(*history.row_of(d), j - 1);
            g_past += rw.day[t] * *covariate_basis(spec, covs, columns, d);
        }
        const Eigen::VectorXd h = H.row(j - 1).transpose();
        fr.x.resize(Q * M);
        for (int m = 0; m < M; ++m) fr.x.segment(m * Q, Q) = (g(m) - g_past(m)) * h;
        rows.push_back(std::move(fr));
    }
    return rows;
}

/// Attaches post-selection intervals to a day-ahead forecast. The training
/// design is rebuilt from `panel` and must match the model's training window.
inline ForecastBundle predict_with_intervals(const FittedModel& model, const LoadPanel& panel,
                                             const CovariateTable& covs, Date target, double alpha,
                                             IntervalKind kind = IntervalKind::Prediction) {
    const auto columns = covariate_columns(model.design, covs);
    if (training_window_hash(panel, covs, columns, model.train_first, model.train_end) != model.window_hash) {
        throw InferenceUnavailableError("data do not match the model's training window");
    }
    const LoadPanel history = truncate_before(panel, target);
    const auto s = detail::covariates_on(model, covs, target);
    ForecastBundle bundle = predict_day_ahead(model, history, covs, target, s);

    const int cls = panel.class_of(target, model.design.scheme);
    const ClassFit& cf = model.class_fit(cls);
    if (!std::isfinite(cf.sigma2)) throw InferenceUnavailableError("no residual variance for this day class");
    const DesignSystem sys = training_design(model, panel, covs, cls);
    Eigen::MatrixXd A = sys.X;
    Eigen::VectorXd b = sys.y_tilde;
    const double lambda = model.config.lambda;
    if (lambda > 0.0) std::tie(A, b) = ridge_augment(sys.X, sys.y_tilde, lambda);
    const auto rows = forecast_design_rows(model, history, covs, target, s);
    if (model.config.method == SolveMethod::LSE) {
        // nothing is selected, so the interval is the unconditional one
        const double inf = std::numeric_limits<double>::infinity();
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        if (qr.rank() < A.cols()) throw InferenceUnavailableError("least squares design is rank deficient");
        const Eigen::MatrixXd G = (A.transpose() * A).inverse();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Eigen::VectorXd eta = A * (G * rows[r].x);
            double var = cf.sigma2 * eta.squaredNorm();
            if (kind == IntervalKind::Prediction) var += cf.sigma2;
            const TruncatedInterval ti = interval_from_bounds(eta.dot(b), var, -inf, inf, alpha);
            bundle.points[r].band = ForecastInterval{rows[r].offset + ti.lo, rows[r].offset + ti.hi, alpha};
        }
        return bundle;
    }
    const std::vector<int>& S = cf.active_set;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        Eigen::VectorXd xs(static_cast<Eigen::Index>(S.size()));
        for (std::size_t a = 0; a < S.size(); ++a) xs(static_cast<Eigen::Index>(a)) = rows[r].x(S[a]);
        const TruncatedInterval ti = selective_interval(A, b, S, xs, cf.sigma2, alpha, kind);
        bundle.points[r].band = ForecastInterval{rows[r].offset + ti.lo, rows[r].offset + ti.hi, alpha};
    }
    return bundle;
}

} // namespace vcload
