#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"

#include "vcload/eval.hpp"
#include "vcload/ingest.hpp"
#include "vcload/model_io.hpp"

namespace vcload {

/// Everything a command can take from a config file. Fields left unset in
/// the file keep their defaults; command-line flags override both.
struct RunConfig {
    ModelConfig model;
    TuningGrid grid;
    BacktestProtocol protocol;
    std::optional<std::string> eval_first, eval_last;
    IngestOptions ingest;
    std::string loads, covariates, holidays;
    double alpha = 0.05;
    ForecastMode mode = ForecastMode::DayAhead;
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline void apply_model(const json& j, ModelConfig& c) {
    const std::string w = "model";
    check_keys(j, {"Q", "interval_basis", "covariates", "weights", "T", "U", "L_alpha", "L_beta", "intraday_share",
                   "lambda", "method", "day_classes", "lag_indexing", "tol"},
               w);
    read_opt(j, "Q", c.Q, w);
    read_opt(j, "T", c.T, w);
    read_opt(j, "U", c.U, w);
    read_opt(j, "L_alpha", c.L_alpha, w);
    read_opt(j, "L_beta", c.L_beta, w);
    read_opt(j, "intraday_share", c.intraday_share, w);
    read_opt(j, "lambda", c.lambda, w);
    read_opt(j, "tol", c.tol, w);
    std::string s;
    if (j.contains("interval_basis")) {
        read_opt(j, "interval_basis", s, w);
        c.interval_kind = parse_basis_kind(s);
    }
    if (j.contains("weights")) {
        read_opt(j, "weights", s, w);
        c.weight_kind = parse_weight_kind(s);
    }
    if (j.contains("method")) {
        read_opt(j, "method", s, w);
        c.method = parse_solve_method(s);
    }
    if (j.contains("day_classes")) {
        read_opt(j, "day_classes", s, w);
        c.scheme = parse_scheme(s);
    }
    if (j.contains("lag_indexing")) {
        read_opt(j, "lag_indexing", s, w);
        c.lags = parse_lag_indexing(s);
    }
    if (j.contains("covariates")) {
        c.covariates.clear();
        for (const auto& cv : j.at("covariates")) {
            check_keys(cv, {"name", "basis", "M"}, "model.covariates[]");
            CovariateConfig cc;
            read_opt(cv, "name", cc.name, "model.covariates[]");
            if (cc.name.empty()) throw ConfigError("model.covariates[]: name is required");
            if (cv.contains("basis")) {
                read_opt(cv, "basis", s, "model.covariates[]");
                cc.kind = parse_basis_kind(s);
            }
            if (!is_spline(cc.kind)) cc.count = 3;
            read_opt(cv, "M", cc.count, "model.covariates[]");
            c.covariates.push_back(cc);
        }
    }
}

inline void apply_grid(const json& j, TuningGrid& g) {
    const std::string w = "grid";
    check_keys(j, {"Q", "M", "T", "lambda", "weights"}, w);
    read_opt(j, "Q", g.Q, w);
    read_opt(j, "M", g.M, w);
    read_opt(j, "T", g.T, w);
    if (j.contains("lambda")) {
        const auto& l = j.at("lambda");
        if (l.is_array()) {
            read_opt(j, "lambda", g.lambda, w);
        } else {
            check_keys(l, {"lo", "hi", "count", "include_zero"}, "grid.lambda");
            double lo = 1e-5, hi = 1.0;
            int count = 20;
            bool zero = true;
            read_opt(l, "lo", lo, "grid.lambda");
            read_opt(l, "hi", hi, "grid.lambda");
            read_opt(l, "count", count, "grid.lambda");
            read_opt(l, "include_zero", zero, "grid.lambda");
            g.lambda = make_lambda_ladder(lo, hi, count, zero);
        }
    }
    if (j.contains("weights")) {
        std::vector<std::string> ws;
        read_opt(j, "weights", ws, w);
        g.weights.clear();
        for (const auto& s : ws) g.weights.push_back(parse_weight_kind(s));
    }
}

} // namespace detail

inline void apply_config_json(const nlohmann::json& j, RunConfig& rc) {
    using detail::read_opt;
    detail::check_keys(j, {"model", "grid", "backtest", "ingest", "data", "alpha", "mode"}, "config");
    if (j.contains("model")) detail::apply_model(j.at("model"), rc.model);
    if (j.contains("grid")) detail::apply_grid(j.at("grid"), rc.grid);
    if (j.contains("backtest")) {
        const auto& b = j.at("backtest");
        detail::check_keys(b, {"eval_first", "eval_last", "selection_days", "min_history_days", "threads"}, "backtest");
        std::string s;
        if (b.contains("eval_first")) {
            read_opt(b, "eval_first", s, "backtest");
            rc.eval_first = s;
        }
        if (b.contains("eval_last")) {
            read_opt(b, "eval_last", s, "backtest");
            rc.eval_last = s;
        }
        read_opt(b, "selection_days", rc.protocol.selection_days, "backtest");
        read_opt(b, "min_history_days", rc.protocol.min_history_days, "backtest");
        read_opt(b, "threads", rc.protocol.threads, "backtest");
    }
    if (j.contains("ingest")) {
        const auto& g = j.at("ingest");
        detail::check_keys(g, {"outlier_mads", "intervals", "moving_averages"}, "ingest");
        read_opt(g, "outlier_mads", rc.ingest.outlier_mads, "ingest");
        if (g.contains("intervals")) {
            int J = 0;
            read_opt(g, "intervals", J, "ingest");
            rc.ingest.intervals = J;
        }
        if (g.contains("moving_averages")) {
            for (const auto& m : g.at("moving_averages")) {
                detail::check_keys(m, {"source", "window", "name"}, "ingest.moving_averages[]");
                MovingAverage ma;
                read_opt(m, "source", ma.source, "ingest.moving_averages[]");
                read_opt(m, "window", ma.window, "ingest.moving_averages[]");
                read_opt(m, "name", ma.name, "ingest.moving_averages[]");
                rc.ingest.moving_averages.push_back(ma);
            }
        }
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::check_keys(d, {"loads", "covariates", "holidays"}, "data");
        read_opt(d, "loads", rc.loads, "data");
        read_opt(d, "covariates", rc.covariates, "data");
        read_opt(d, "holidays", rc.holidays, "data");
    }
    read_opt(j, "alpha", rc.alpha, "config");
    if (j.contains("mode")) {
        std::string s;
        read_opt(j, "mode", s, "config");
        rc.mode = parse_forecast_mode(s);
    }
    rc.grid.base = rc.model;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    RunConfig rc;
    apply_config_json(j, rc);
    // data paths in a config file are relative to that file
    const auto base = std::filesystem::path(path).parent_path();
    for (std::string* p : {&rc.loads, &rc.covariates, &rc.holidays}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    }
    return rc;
}

} // namespace vcload
