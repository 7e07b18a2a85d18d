#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vcload/forecast.hpp"

namespace vcload {

struct MapeResult {
    double value = 0.0; // percent
    std::size_t used = 0;
    std::size_t excluded = 0;
};

/// 100 * mean(|y - yhat| / y) over points with y > 0.
inline MapeResult mape(std::span<const double> actuals, std::span<const double> forecasts) {
    if (actuals.size() != forecasts.size()) throw ShapeError("mape: actuals and forecasts differ in length");
    MapeResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        if (!(actuals[i] > 0.0) || !std::isfinite(actuals[i])) {
            ++r.excluded;
            continue;
        }
        sum += std::abs(actuals[i] - forecasts[i]) / actuals[i];
        ++r.used;
    }
    if (r.used == 0) throw MetricError("mape: no positive actuals to score");
    r.value = 100.0 * sum / static_cast<double>(r.used);
    return r;
}

/// Geometric ladder from lo to hi (count points), optionally led by 0.
inline std::vector<double> make_lambda_ladder(double lo = 1e-5, double hi = 1.0, int count = 20,
                                              bool include_zero = true) {
    if (!(lo > 0.0) || !(hi > lo) || count < 2) throw ConfigError("invalid lambda ladder");
    std::vector<double> out;
    if (include_zero) out.push_back(0.0);
    const double ratio = std::log(hi / lo) / (count - 1);
    for (int k = 0; k < count; ++k) out.push_back(k == count - 1 ? hi : lo * std::exp(ratio * k));
    return out;
}

/// Candidate lists; M applies to every spline covariate of the base config.
struct TuningGrid {
    ModelConfig base;
    std::vector<int> Q{5, 10};
    std::vector<int> M{5, 10};
    std::vector<int> T{2, 4};
    std::vector<double> lambda = make_lambda_ladder();
    std::vector<WeightKind> weights{WeightKind::Mean, WeightKind::AR1};

    std::size_t size() const { return Q.size() * M.size() * T.size() * lambda.size() * weights.size(); }
};

struct Candidate {
    std::size_t index = 0;
    ModelConfig config;
    int M = 0;
};

inline std::string describe(const Candidate& c) {
    char lam[32];
    std::snprintf(lam, sizeof lam, "%.6g", c.config.lambda);
    return "weights=" + to_string(c.config.weight_kind) + " Q=" + std::to_string(c.config.Q) +
           " M=" + std::to_string(c.M) + " T=" + std::to_string(c.config.T) + " lambda=" + lam;
}

/// Enumeration order: weight kind, Q, M, T, lambda (lambda varies fastest).
inline std::vector<Candidate> grid_enumerate(const TuningGrid& grid) {
    if (grid.size() == 0) throw ConfigError("tuning grid has an empty list");
    std::vector<Candidate> out;
    out.reserve(grid.size());
    for (WeightKind w : grid.weights)
        for (int q : grid.Q)
            for (int m : grid.M)
                for (int t : grid.T)
                    for (double lam : grid.lambda) {
                        Candidate c;
                        c.index = out.size();
                        c.config = grid.base;
                        c.config.weight_kind = w;
                        c.config.Q = q;
                        c.config.T = t;
                        c.config.lambda = lam;
                        for (auto& cov : c.config.covariates) {
                            if (is_spline(cov.kind)) cov.count = m;
                        }
                        c.M = m;
                        out.push_back(std::move(c));
                    }
    return out;
}

/// True when `a` wins a MAPE tie against `b`: larger lambda, then smaller
/// Q, M, T, then earlier enumeration.
inline bool tie_preferred(const Candidate& a, const Candidate& b) {
    if (a.config.lambda != b.config.lambda) return a.config.lambda > b.config.lambda;
    if (a.config.Q != b.config.Q) return a.config.Q < b.config.Q;
    if (a.M != b.M) return a.M < b.M;
    if (a.config.T != b.config.T) return a.config.T < b.config.T;
    return a.index < b.index;
}

enum class ForecastMode { DayAhead, Intraday };

inline std::string to_string(ForecastMode m) { return m == ForecastMode::DayAhead ? "day-ahead" : "intraday"; }

inline ForecastMode parse_forecast_mode(std::string_view s) {
    if (s == "day-ahead") return ForecastMode::DayAhead;
    if (s == "intraday") return ForecastMode::Intraday;
    throw ConfigError("unknown forecast mode '" + std::string(s) + "'");
}

/// Anything the backtest can score. `history` holds only days before
/// `target`; `covs` ends at `target` (its forecast-day input); `today` holds
/// the target day's loads in intraday mode and is empty otherwise.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual void fit(const LoadPanel& history, const CovariateTable& covs, Date target) = 0;
    virtual ForecastBundle predict(const LoadPanel& history, const CovariateTable& covs, Date target,
                                   std::span<const double> today) = 0;
};

using ForecasterFactory = std::function<std::unique_ptr<Forecaster>(const ModelConfig&)>;

/// The varying-coefficient model, refitted for the target's day class.
class VcForecaster : public Forecaster {
public:
    explicit VcForecaster(ModelConfig config) : config_(std::move(config)) {}

    void fit(const LoadPanel& history, const CovariateTable& covs, Date target) override {
        const int cls = history.class_of(target, config_.scheme);
        model_ = vcload::fit(history, covs, config_, std::nullopt, std::vector<int>{cls});
    }

    ForecastBundle predict(const LoadPanel& history, const CovariateTable& covs, Date target,
                           std::span<const double> today) override {
        if (!model_) throw ForecastError("predict called before fit");
        std::vector<double> s;
        for (const auto& g : model_->design.groups) s.push_back(covs.value(target, covs.column(g.name)));
        if (today.empty()) return predict_day_ahead(*model_, history, covs, target, s);
        return predict_intraday(*model_, history, covs, target, today, s);
    }

    const FittedModel& model() const { return *model_; }

private:
    ModelConfig config_;
    std::optional<FittedModel> model_;
};

inline ForecasterFactory default_factory() {
    return [](const ModelConfig& c) { return std::make_unique<VcForecaster>(c); };
}

struct BacktestProtocol {
    Date eval_first{};
    Date eval_last{}; // exclusive
    int selection_days = 365;
    int min_history_days = 56;
    ForecastMode mode = ForecastMode::DayAhead;
    unsigned threads = 0; // 0 = hardware concurrency
};

struct DayScore {
    Date date{};
    double ape_sum = 0.0;
    std::size_t used = 0;
    std::size_t excluded = 0;
    double mape() const { return used ? 100.0 * ape_sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN(); }
};

struct ForecastRecord {
    Date date{};
    int interval = 0;
    std::size_t candidate = 0;
    double actual = 0.0;
    double y_hat = 0.0;
    double mu_hat = 0.0;
    double b_total = 0.0;
    std::vector<double> b_groups;
};

struct EpochChoice {
    Date epoch{};
    std::size_t candidate = 0;
    double selection_mape = std::numeric_limits<double>::quiet_NaN();
    int window_days = 0; // scored days used for the choice
};

struct MonthScore {
    Date month{}; // first of month
    double mape = 0.0;
    std::size_t used = 0;
};

struct CandidateScore {
    std::size_t candidate = 0;
    double mape = std::numeric_limits<double>::quiet_NaN(); // over the evaluation window
    std::size_t used = 0;
    std::size_t failed_days = 0;
};

struct BacktestReport {
    std::vector<Candidate> candidates;
    std::vector<std::string> group_names;
    std::vector<DayScore> daily; // chosen forecasts, evaluation window
    std::vector<std::size_t> daily_candidate;
    std::vector<MonthScore> monthly;
    std::vector<EpochChoice> epochs;
    std::vector<ForecastRecord> records;
    std::vector<CandidateScore> sweep;
    double total_mape = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
};

namespace detail {

struct CandidateRun {
    std::map<Date, DayScore> scores;          // every scored day
    std::map<Date, ForecastBundle> forecasts; // evaluation window only
    std::size_t failed = 0;
};

inline CandidateRun run_candidate(const Candidate& cand, const ForecasterFactory& factory, const LoadPanel& panel,
                                  const CovariateTable& covs, Date score_first, const BacktestProtocol& p) {
    CandidateRun run;
    auto forecaster = factory(cand.config);
    for (Date d = score_first; d < p.eval_last; d = add_days(d, 1)) {
        const auto row = panel.row_of(d);
        if (!row || !panel.is_valid(*row)) continue; // unscored, like training exclusions
        const LoadPanel history = truncate_before(panel, d);
        const CovariateTable cv = truncate_before(covs, d, true);
        std::vector<double> today;
        if (p.mode == ForecastMode::Intraday) {
            today.resize(static_cast<std::size_t>(panel.intervals()));
            for (int j = 0; j < panel.intervals(); ++j) today[static_cast<std::size_t>(j)] = panel.loads(*row, j);
        }
        ForecastBundle fb;
        try {
            forecaster->fit(history, cv, d);
            fb = forecaster->predict(history, cv, d, today);
        } catch (const Error&) {
            ++run.failed;
            continue;
        }
        DayScore s;
        s.date = d;
        for (const auto& pt : fb.points) {
            const double y = panel.loads(*row, pt.interval - 1);
            if (!(y > 0.0)) {
                ++s.excluded;
                continue;
            }
            s.ape_sum += std::abs(y - pt.y_hat) / y;
            ++s.used;
        }
        if (s.used == 0) continue;
        run.scores.emplace(d, s);
        if (d >= p.eval_first) run.forecasts.emplace(d, std::move(fb));
    }
    return run;
}

template <class Job>
void parallel_for(std::size_t n, unsigned threads, Job&& job) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace detail

/// Expanding-window backtest with daily refits and monthly re-selection of
/// the candidate that minimizes MAPE over the trailing selection window.
inline BacktestReport rolling_backtest(const LoadPanel& panel, const CovariateTable& covs,
                                       const std::vector<Candidate>& candidates, const BacktestProtocol& p,
                                       const ForecasterFactory& factory = default_factory()) {
    if (candidates.empty()) throw WindowError("no candidates to evaluate");
    if (!(p.eval_first < p.eval_last)) throw WindowError("evaluation window is empty");
    if (p.eval_first < panel.first_date || p.eval_last > panel.end_date()) {
        throw WindowError("evaluation window " + format_date(p.eval_first) + ".." + format_date(p.eval_last) +
                          " is not inside the panel");
    }
    if (p.selection_days < 1 || p.min_history_days < 0) throw WindowError("invalid selection or history length");
    const Date earliest = add_days(panel.first_date, p.min_history_days);
    if (earliest > p.eval_first) {
        throw WindowError("not enough history before " + format_date(p.eval_first) + " (need " +
                          std::to_string(p.min_history_days) + " days)");
    }

    BacktestReport rep;
    rep.candidates = candidates;
    for (const auto& c : candidates.front().config.covariates) rep.group_names.push_back(c.name);
    const bool select = candidates.size() > 1;
    const Date score_first = select ? std::max(add_days(p.eval_first, -p.selection_days), earliest) : p.eval_first;

    std::vector<detail::CandidateRun> runs(candidates.size());
    detail::parallel_for(candidates.size(), p.threads, [&](std::size_t k) {
        runs[k] = detail::run_candidate(candidates[k], factory, panel, covs, score_first, p);
    });

    // epochs: one per calendar month touching the evaluation window
    std::vector<Date> epochs;
    for (Date m = first_of_month(p.eval_first); m < p.eval_last; m = first_of_month(add_days(m, 32))) {
        epochs.push_back(std::max(m, p.eval_first));
    }

    for (std::size_t e = 0; e < epochs.size(); ++e) {
        EpochChoice ch;
        ch.epoch = epochs[e];
        if (select) {
            const Date wfirst_nominal = add_days(ch.epoch, -p.selection_days);
            const Date wfirst = std::max(wfirst_nominal, score_first);
            if (wfirst > wfirst_nominal) {
                rep.warnings.push_back("selection window for " + format_month(ch.epoch) + " shrunk to " +
                                       std::to_string(days_between(wfirst, ch.epoch)) + " days");
            }
            // days scored by every candidate
            std::vector<Date> common;
            for (const auto& [d, s] : runs.front().scores) {
                if (d < wfirst || d >= ch.epoch) continue;
                bool all = true;
                for (const auto& r : runs) all = all && r.scores.count(d);
                if (all) common.push_back(d);
            }
            if (common.empty()) {
                throw WindowError("empty trailing-selection window before " + format_date(ch.epoch));
            }
            ch.window_days = static_cast<int>(common.size());
            std::optional<std::size_t> best;
            double best_mape = 0.0;
            for (std::size_t k = 0; k < candidates.size(); ++k) {
                double sum = 0.0;
                std::size_t used = 0;
                for (const Date d : common) {
                    const auto& s = runs[k].scores.at(d);
                    sum += s.ape_sum;
                    used += s.used;
                }
                const double m = 100.0 * sum / static_cast<double>(used);
                const double tie = 1e-12 * std::max(1.0, std::abs(m));
                if (!best || m < best_mape - tie ||
                    (std::abs(m - best_mape) <= tie && tie_preferred(candidates[k], candidates[*best]))) {
                    best = k;
                    best_mape = m;
                }
            }
            ch.candidate = *best;
            ch.selection_mape = best_mape;
        }
        rep.epochs.push_back(ch);

        const Date stop = e + 1 < epochs.size() ? epochs[e + 1] : p.eval_last;
        const auto& run = runs[ch.candidate];
        for (Date d = ch.epoch; d < stop; d = add_days(d, 1)) {
            const auto it = run.scores.find(d);
            if (it == run.scores.end()) continue;
            rep.daily.push_back(it->second);
            rep.daily_candidate.push_back(ch.candidate);
            const auto row = *panel.row_of(d);
            for (const auto& pt : run.forecasts.at(d).points) {
                rep.records.push_back({d, pt.interval, ch.candidate, panel.loads(row, pt.interval - 1), pt.y_hat,
                                       pt.mu_hat, pt.b_total, pt.b_groups});
            }
        }
    }

    // pooled monthly and total scores from the daily sums
    double total = 0.0;
    std::size_t total_n = 0;
    for (const auto& s : rep.daily) {
        const Date m = first_of_month(s.date);
        if (rep.monthly.empty() || rep.monthly.back().month != m) rep.monthly.push_back({m, 0.0, 0});
        rep.monthly.back().mape += s.ape_sum;
        rep.monthly.back().used += s.used;
        total += s.ape_sum;
        total_n += s.used;
    }
    for (auto& m : rep.monthly) m.mape = 100.0 * m.mape / static_cast<double>(m.used);
    if (total_n) rep.total_mape = 100.0 * total / static_cast<double>(total_n);

    for (std::size_t k = 0; k < candidates.size(); ++k) {
        CandidateScore cs;
        cs.candidate = k;
        cs.failed_days = runs[k].failed;
        double sum = 0.0;
        for (const auto& [d, s] : runs[k].scores) {
            if (d < p.eval_first) continue;
            sum += s.ape_sum;
            cs.used += s.used;
        }
        if (cs.used) cs.mape = 100.0 * sum / static_cast<double>(cs.used);
        rep.sweep.push_back(cs);
        if (runs[k].failed) {
            rep.warnings.push_back("candidate " + std::to_string(k) + " failed on " +
                                   std::to_string(runs[k].failed) + " days");
        }
    }
    return rep;
}

inline BacktestReport rolling_backtest(const LoadPanel& panel, const CovariateTable& covs, const TuningGrid& grid,
                                       const BacktestProtocol& p) {
    return rolling_backtest(panel, covs, grid_enumerate(grid), p);
}

struct TuneResult {
    std::vector<Candidate> candidates;
    std::vector<CandidateScore> scores; // over days scored by every candidate
    std::size_t best = 0;
    int window_days = 0;
};

/// Scores every candidate by rolling day-ahead forecasts over [first, last)
/// and picks the minimum-MAPE one with the backtest's tie rule.
inline TuneResult tune_grid(const LoadPanel& panel, const CovariateTable& covs,
                            const std::vector<Candidate>& candidates, Date first, Date last,
                            BacktestProtocol p = {}, const ForecasterFactory& factory = default_factory()) {
    if (candidates.empty()) throw WindowError("no candidates to evaluate");
    if (!(first < last) || first < panel.first_date || last > panel.end_date()) {
        throw WindowError("tuning window is empty or outside the panel");
    }
    p.eval_first = last; // keep no forecasts, only scores
    p.eval_last = last;
    std::vector<detail::CandidateRun> runs(candidates.size());
    detail::parallel_for(candidates.size(), p.threads, [&](std::size_t k) {
        runs[k] = detail::run_candidate(candidates[k], factory, panel, covs, first, p);
    });
    TuneResult out;
    out.candidates = candidates;
    std::vector<Date> common;
    for (const auto& [d, s] : runs.front().scores) {
        bool all = true;
        for (const auto& r : runs) all = all && r.scores.count(d);
        if (all) common.push_back(d);
    }
    if (common.empty()) throw WindowError("no day in the tuning window was scored by every candidate");
    out.window_days = static_cast<int>(common.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        CandidateScore cs;
        cs.candidate = k;
        cs.failed_days = runs[k].failed;
        double sum = 0.0;
        for (const Date d : common) {
            sum += runs[k].scores.at(d).ape_sum;
            cs.used += runs[k].scores.at(d).used;
        }
        cs.mape = 100.0 * sum / static_cast<double>(cs.used);
        out.scores.push_back(cs);
        const double best = out.scores[out.best].mape;
        const double tie = 1e-12 * std::max(1.0, std::abs(best));
        if (k > 0 && (cs.mape < best - tie ||
                      (std::abs(cs.mape - best) <= tie && tie_preferred(candidates[k], candidates[out.best])))) {
            out.best = k;
        }
    }
    return out;
}

// CSV tables. Scores use fixed precision so golden files compare bytewise.

inline std::string fixed(double v, int digits = 8) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string exact(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_monthly_csv(std::ostream& os, const BacktestReport& r) {
    os << "month,mape,points\n";
    for (const auto& m : r.monthly) os << format_month(m.month) << ',' << fixed(m.mape) << ',' << m.used << '\n';
    os << "total," << fixed(r.total_mape) << ',';
    std::size_t n = 0;
    for (const auto& m : r.monthly) n += m.used;
    os << n << '\n';
}

inline void write_daily_csv(std::ostream& os, const BacktestReport& r) {
    os << "date,candidate,mape,points,excluded\n";
    for (std::size_t i = 0; i < r.daily.size(); ++i) {
        const auto& s = r.daily[i];
        os << format_date(s.date) << ',' << r.daily_candidate[i] << ',' << fixed(s.mape()) << ',' << s.used << ','
           << s.excluded << '\n';
    }
}

inline void write_epochs_csv(std::ostream& os, const BacktestReport& r) {
    os << "epoch,candidate,config,selection_mape,window_days\n";
    for (const auto& e : r.epochs) {
        os << format_date(e.epoch) << ',' << e.candidate << ",\"" << describe(r.candidates[e.candidate]) << "\","
           << fixed(e.selection_mape) << ',' << e.window_days << '\n';
    }
}

/// Plot-ready lambda-vs-MAPE table (one row per candidate).
inline void write_sweep_csv(std::ostream& os, const BacktestReport& r) {
    os << "candidate,weights,Q,M,T,lambda,mape,points,failed_days\n";
    for (const auto& s : r.sweep) {
        const auto& c = r.candidates[s.candidate];
        os << s.candidate << ',' << to_string(c.config.weight_kind) << ',' << c.config.Q << ',' << c.M << ','
           << c.config.T << ',' << exact(c.config.lambda) << ',' << fixed(s.mape) << ',' << s.used << ','
           << s.failed_days << '\n';
    }
}

/// Per-forecast decomposition records (stack plot input).
inline void write_records_csv(std::ostream& os, const BacktestReport& r) {
    os << "date,interval,candidate,actual,y_hat,mu_hat,b_total";
    for (const auto& g : r.group_names) os << ",b_" << g;
    os << '\n';
    for (const auto& x : r.records) {
        os << format_date(x.date) << ',' << x.interval << ',' << x.candidate << ',' << exact(x.actual) << ','
           << exact(x.y_hat) << ',' << exact(x.mu_hat) << ',' << exact(x.b_total);
        for (double b : x.b_groups) os << ',' << exact(b);
        os << '\n';
    }
}

} // namespace vcload
