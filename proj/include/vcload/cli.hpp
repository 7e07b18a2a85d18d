#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "vcload/config.hpp"
#include "vcload/simulate.hpp"

namespace vcload {

/// Raw command-line values; unset optionals fall back to the config file.
struct CliFlags {
    std::string command;
    std::optional<std::string> config, loads, covariates, holidays, model, out, mode;
    std::vector<std::string> dates;
    std::optional<double> alpha;
    std::optional<std::uint64_t> seed;
    std::optional<int> days;
};

/// flag > config file > default.
inline RunConfig resolve_run_config(const CliFlags& f) {
    RunConfig rc = f.config ? load_config(*f.config) : RunConfig{};
    if (f.loads) rc.loads = *f.loads;
    if (f.covariates) rc.covariates = *f.covariates;
    if (f.holidays) rc.holidays = *f.holidays;
    if (f.alpha) rc.alpha = *f.alpha;
    if (f.mode) rc.mode = parse_forecast_mode(*f.mode);
    rc.grid.base = rc.model;
    rc.ingest.scheme = rc.model.scheme;
    rc.protocol.mode = rc.mode;
    return rc;
}

namespace detail {

inline IngestResult load_data(const RunConfig& rc, DayClassScheme scheme, std::ostream& err) {
    if (rc.loads.empty()) throw ConfigError("no loads file (use --loads or data.loads)");
    if (rc.covariates.empty()) throw ConfigError("no covariates file (use --covariates or data.covariates)");
    IngestOptions opt = rc.ingest;
    opt.scheme = scheme;
    IngestResult r = ingest(rc.loads, rc.covariates, rc.holidays, opt);
    for (const auto& w : r.report.warnings) err << "vcload: warning: " << w << '\n';
    return r;
}

inline std::filesystem::path out_dir(const CliFlags& f) {
    const std::filesystem::path dir = f.out.value_or(".");
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + p.string());
    return os;
}

inline std::vector<Date> target_dates(const CliFlags& f) {
    if (f.dates.empty()) throw ConfigError("--date is required");
    std::vector<Date> out;
    for (const auto& d : f.dates) out.push_back(parse_date(d));
    return out;
}

inline std::vector<double> todays_loads(const LoadPanel& panel, Date d) {
    std::vector<double> v(static_cast<std::size_t>(panel.intervals()), kMissing);
    if (const auto row = panel.row_of(d)) {
        for (int j = 0; j < panel.intervals(); ++j) v[static_cast<std::size_t>(j)] = panel.loads(*row, j);
    }
    return v;
}

inline ForecastBundle forecast_one(const FittedModel& m, const IngestResult& data, Date d, ForecastMode mode) {
    const LoadPanel history = truncate_before(data.panel, d);
    std::vector<double> s;
    for (const auto& g : m.design.groups) s.push_back(data.covs.value(d, data.covs.column(g.name)));
    if (mode == ForecastMode::Intraday) {
        const auto today = todays_loads(data.panel, d);
        return predict_intraday(m, history, data.covs, d, today, s);
    }
    return predict_day_ahead(m, history, data.covs, d, s);
}

inline FittedModel need_model(const CliFlags& f) {
    if (!f.model) throw ModelFileError("--model is required");
    return load_model(*f.model);
}

inline std::pair<Date, Date> eval_window(const RunConfig& rc, const LoadPanel& panel) {
    const Date last = rc.eval_last ? parse_date(*rc.eval_last) : panel.end_date();
    const Date first = rc.eval_first ? parse_date(*rc.eval_first) : first_of_month(add_days(last, -1));
    return {first, last};
}

inline void write_model_json(std::ostream& os, const ModelConfig& c) {
    os << detail::to_json(c).dump(1) << '\n';
}

// subcommands

inline int cmd_fit(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const auto data = load_data(rc, rc.model.scheme, err);
    std::optional<Date> end;
    if (!f.dates.empty()) end = parse_date(f.dates.front());
    if (rc.model.method == SolveMethod::NNLS && rc.model.lambda == 0.0) {
        err << "vcload: warning: lambda = 0 can make the solve unstable\n";
    }
    const FittedModel m = fit(data.panel, data.covs, rc.model, end);
    if (!f.model) throw ModelFileError("--model is required as the output path");
    save_model(*f.model, m);
    out << "fitted " << m.classes.size() << " day classes on " << format_date(m.train_first) << ".."
        << format_date(m.train_end) << " -> " << *f.model << '\n';
    return 0;
}

inline int cmd_forecast(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream& err,
                        bool decompose) {
    const FittedModel m = need_model(f);
    const auto data = load_data(rc, m.config.scheme, err);
    const auto dates = target_dates(f);
    const auto dir = out_dir(f);
    auto os = open_output(dir / (decompose ? "decompose.csv" : "forecast.csv"));
    os << "date,interval,y_hat";
    if (decompose) {
        os << ",mu_hat,b_total";
        for (const auto& g : m.design.groups) os << ",b_" << g.name;
    }
    os << '\n';
    std::size_t rows = 0;
    for (const Date d : dates) {
        const ForecastBundle b = forecast_one(m, data, d, rc.mode);
        for (const auto& p : b.points) {
            os << format_date(p.date) << ',' << p.interval << ',' << exact(p.y_hat);
            if (decompose) {
                os << ',' << exact(p.mu_hat) << ',' << exact(p.b_total);
                for (double v : p.b_groups) os << ',' << exact(v);
            }
            os << '\n';
            ++rows;
        }
    }
    out << "wrote " << rows << " rows to " << (dir / (decompose ? "decompose.csv" : "forecast.csv")).string() << '\n';
    return 0;
}

inline int cmd_interval(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const FittedModel m = need_model(f);
    if (!(rc.alpha > 0.0 && rc.alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
    if (rc.mode != ForecastMode::DayAhead) throw ModeError("intervals are available for day-ahead forecasts only");
    const auto data = load_data(rc, m.config.scheme, err);
    const auto dates = target_dates(f);
    const auto dir = out_dir(f);
    auto os = open_output(dir / "interval.csv");
    os << "date,interval,y_hat,lo,hi,alpha\n";
    for (const Date d : dates) {
        const ForecastBundle b = predict_with_intervals(m, data.panel, data.covs, d, rc.alpha);
        for (const auto& p : b.points) {
            os << format_date(p.date) << ',' << p.interval << ',' << exact(p.y_hat) << ',' << exact(p.band->lo) << ','
               << exact(p.band->hi) << ',' << exact(p.band->alpha) << '\n';
        }
    }
    out << "wrote intervals to " << (dir / "interval.csv").string() << '\n';
    return 0;
}

inline int cmd_tune(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const auto data = load_data(rc, rc.model.scheme, err);
    const Date last = rc.eval_last ? parse_date(*rc.eval_last) : data.panel.end_date();
    Date first = std::max(add_days(last, -rc.protocol.selection_days),
                          add_days(data.panel.first_date, rc.protocol.min_history_days));
    if (days_between(first, last) < rc.protocol.selection_days) {
        err << "vcload: warning: tuning window shrunk to " << days_between(first, last) << " days\n";
    }
    const auto cands = grid_enumerate(rc.grid);
    const TuneResult t = tune_grid(data.panel, data.covs, cands, first, last, rc.protocol);
    const auto dir = out_dir(f);
    {
        auto os = open_output(dir / "tune.csv");
        os << "candidate,weights,Q,M,T,lambda,mape,points,failed_days\n";
        for (const auto& s : t.scores) {
            const auto& c = cands[s.candidate];
            os << s.candidate << ',' << to_string(c.config.weight_kind) << ',' << c.config.Q << ',' << c.M << ','
               << c.config.T << ',' << exact(c.config.lambda) << ',' << fixed(s.mape) << ',' << s.used << ','
               << s.failed_days << '\n';
        }
    }
    {
        auto os = open_output(dir / "best_model.json");
        write_model_json(os, cands[t.best].config);
    }
    out << "best candidate " << t.best << ": " << describe(cands[t.best]) << " mape=" << fixed(t.scores[t.best].mape)
        << " over " << t.window_days << " days\n";
    return 0;
}

inline int cmd_backtest(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const auto data = load_data(rc, rc.model.scheme, err);
    BacktestProtocol p = rc.protocol;
    std::tie(p.eval_first, p.eval_last) = eval_window(rc, data.panel);
    const BacktestReport r = rolling_backtest(data.panel, data.covs, grid_enumerate(rc.grid), p);
    for (const auto& w : r.warnings) err << "vcload: warning: " << w << '\n';
    const auto dir = out_dir(f);
    {
        auto os = open_output(dir / "monthly.csv");
        write_monthly_csv(os, r);
    }
    {
        auto os = open_output(dir / "daily.csv");
        write_daily_csv(os, r);
    }
    {
        auto os = open_output(dir / "epochs.csv");
        write_epochs_csv(os, r);
    }
    {
        auto os = open_output(dir / "sweep.csv");
        write_sweep_csv(os, r);
    }
    {
        auto os = open_output(dir / "records.csv");
        write_records_csv(os, r);
    }
    out << "backtest " << format_date(p.eval_first) << ".." << format_date(p.eval_last) << " total mape "
        << fixed(r.total_mape) << '\n';
    return 0;
}

inline int cmd_emit_plots(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const FittedModel m = need_model(f);
    const auto dir = out_dir(f);
    const auto& d = m.design;
    {
        auto os = open_output(dir / "basis_interval.csv");
        const Eigen::MatrixXd H = evaluate_intervals(d.interval_basis, m.intervals).values;
        os << "interval";
        for (int q = 0; q < d.Q(); ++q) os << ",h" << q + 1;
        os << '\n';
        for (int j = 0; j < m.intervals; ++j) {
            os << j + 1;
            for (int q = 0; q < d.Q(); ++q) os << ',' << exact(H(j, q));
            os << '\n';
        }
    }
    constexpr int kPoints = 101;
    for (const auto& g : d.groups) {
        auto os = open_output(dir / ("basis_" + g.name + ".csv"));
        os << "s";
        for (int k = 0; k < g.spec.count; ++k) os << ",g" << k + 1;
        os << '\n';
        for (int i = 0; i < kPoints; ++i) {
            const double s = g.spec.domain_lo + (g.spec.domain_hi - g.spec.domain_lo) * i / (kPoints - 1);
            const Eigen::VectorXd v = eval_basis(g.spec, s);
            os << exact(s);
            for (int k = 0; k < g.spec.count; ++k) os << ',' << exact(v(k));
            os << '\n';
        }
    }
    {
        auto os = open_output(dir / "coefficients.csv");
        os << "day_class,interval,group,term,value\n";
        for (const auto& [cls, cf] : m.classes) {
            const Eigen::MatrixXd B = coefficient_curves(m, cls);
            for (std::size_t k = 0; k < d.groups.size(); ++k) {
                const int off = d.group_offset(k);
                for (int t = 0; t < d.groups[k].spec.count; ++t) {
                    for (int j = 0; j < m.intervals; ++j) {
                        os << day_class_name(cls, m.config.scheme) << ',' << j + 1 << ',' << d.groups[k].name << ','
                           << t + 1 << ',' << exact(B(j, off + t)) << '\n';
                    }
                }
            }
        }
    }
    {
        // effect curves at five evenly spaced covariate levels, others at mid-range
        auto os = open_output(dir / "effects.csv");
        os << "day_class,group,level,interval,b\n";
        for (const auto& [cls, cf] : m.classes) {
            std::vector<double> mid;
            for (const auto& g : d.groups) mid.push_back(0.5 * (g.spec.domain_lo + g.spec.domain_hi));
            for (std::size_t k = 0; k < d.groups.size(); ++k) {
                for (int lv = 0; lv < 5; ++lv) {
                    auto s = mid;
                    const auto& sp = d.groups[k].spec;
                    s[k] = sp.domain_lo + (sp.domain_hi - sp.domain_lo) * lv / 4.0;
                    const Eigen::MatrixXd by = weather_effect_by_group(m, cls, s);
                    for (int j = 0; j < m.intervals; ++j) {
                        os << day_class_name(cls, m.config.scheme) << ',' << d.groups[k].name << ',' << exact(s[k])
                           << ',' << j + 1 << ',' << exact(by(j, static_cast<Eigen::Index>(k))) << '\n';
                    }
                }
            }
        }
    }
    (void)rc;
    (void)err;
    out << "wrote plot data to " << dir.string() << '\n';
    return 0;
}

inline int cmd_simulate(const CliFlags& f, const RunConfig& rc, std::ostream& out, std::ostream&) {
    SimulationSpec sim;
    sim.config = rc.model;
    if (!f.dates.empty()) sim.first = parse_date(f.dates.front());
    if (f.days) sim.days = *f.days;
    if (f.seed) sim.seed = *f.seed;
    if (rc.ingest.intervals) sim.intervals = *rc.ingest.intervals;
    if (!rc.holidays.empty()) {
        std::ifstream is(rc.holidays);
        if (!is) throw IngestError("cannot open " + rc.holidays);
        const auto h = read_holidays(is, rc.holidays);
        sim.holidays.assign(h.begin(), h.end());
    }
    const SimulatedData s = simulate(sim);
    const auto dir = out_dir(f);
    {
        auto os = open_output(dir / "loads.csv");
        os << "date,interval,load\n";
        for (Eigen::Index i = 0; i < s.panel.days(); ++i) {
            for (int j = 0; j < s.panel.intervals(); ++j) {
                os << format_date(s.panel.date(i)) << ',' << j + 1 << ',' << exact(s.panel.loads(i, j)) << '\n';
            }
        }
    }
    {
        auto os = open_output(dir / "covariates.csv");
        os << "date";
        for (const auto& n : s.covs.names) os << ',' << n;
        os << '\n';
        for (Eigen::Index i = 0; i < s.covs.days(); ++i) {
            os << format_date(s.covs.date(i));
            for (Eigen::Index k = 0; k < s.covs.values.cols(); ++k) os << ',' << exact(s.covs.values(i, k));
            os << '\n';
        }
    }
    save_model((dir / "truth.vcm").string(), s.truth);
    out << "simulated " << s.panel.days() << " days into " << dir.string() << '\n';
    return 0;
}

} // namespace detail

/// Runs one command; returns the process exit status. Failures print a
/// single "vcload: error[<code>]: <message>" line on `err`.
inline int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Varying-coefficient load forecasting"};
    app.require_subcommand(1);
    CliFlags f;
    std::string alpha_text;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"fit", "fit one model per day class and write a model file"},
        {"forecast", "forecast the given dates"},
        {"decompose", "forecast with past-load and covariate effect columns"},
        {"interval", "forecast with post-selection prediction intervals"},
        {"tune", "select grid candidate by trailing-window MAPE"},
        {"backtest", "rolling-origin backtest with monthly re-selection"},
        {"emit-plots", "write basis, coefficient and effect curves as CSV"},
        {"simulate", "write a synthetic data set drawn from the model"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", f.config, "JSON config file");
        sub->add_option("--loads", f.loads, "loads CSV (date,interval,load)");
        sub->add_option("--covariates", f.covariates, "covariates CSV (date,<name>,...)");
        sub->add_option("--holidays", f.holidays, "holiday list, one date per line");
        sub->add_option("--model", f.model, "model file");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--date", f.dates, "target date YYYY-MM-DD (repeatable)");
        sub->add_option("--alpha", f.alpha, "interval level alpha");
        sub->add_option("--mode", f.mode, "day-ahead or intraday");
        sub->add_option("--seed", f.seed, "random seed (simulate)");
        sub->add_option("--days", f.days, "number of days (simulate)");
        sub->callback([&f, n = name] { f.command = n; });
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "vcload: error[usage]: " << e.what() << '\n';
        return 2;
    }

    try {
        const RunConfig rc = resolve_run_config(f);
        if (f.command == "fit") return detail::cmd_fit(f, rc, out, err);
        if (f.command == "forecast") return detail::cmd_forecast(f, rc, out, err, false);
        if (f.command == "decompose") return detail::cmd_forecast(f, rc, out, err, true);
        if (f.command == "interval") return detail::cmd_interval(f, rc, out, err);
        if (f.command == "tune") return detail::cmd_tune(f, rc, out, err);
        if (f.command == "backtest") return detail::cmd_backtest(f, rc, out, err);
        if (f.command == "emit-plots") return detail::cmd_emit_plots(f, rc, out, err);
        if (f.command == "simulate") return detail::cmd_simulate(f, rc, out, err);
        err << "vcload: error[usage]: unknown command\n";
        return 2;
    } catch (const Error& e) {
        err << "vcload: error[" << e.code() << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "vcload: error[internal]: " << e.what() << '\n';
        return 1;
    }
}

} // namespace vcload
