#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "vcload/forecast.hpp"

namespace vcload {

inline constexpr const char* kModelMagic = "VCLOAD-MODEL 1";

namespace detail {

using json = nlohmann::json;

inline json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double num_from(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline json to_json(const BasisSpec& b) {
    return {{"kind", to_string(b.kind)}, {"count", b.count}, {"domain_lo", b.domain_lo},
            {"domain_hi", b.domain_hi}, {"knots", b.knots}};
}

inline BasisSpec basis_from_json(const json& j) {
    BasisSpec b;
    b.kind = parse_basis_kind(j.at("kind").get<std::string>());
    b.count = j.at("count").get<int>();
    b.domain_lo = j.at("domain_lo").get<double>();
    b.domain_hi = j.at("domain_hi").get<double>();
    b.knots = j.at("knots").get<std::vector<double>>();
    validate(b);
    return b;
}

inline json to_json(const ModelConfig& c) {
    json covs = json::array();
    for (const auto& cv : c.covariates) {
        covs.push_back({{"name", cv.name}, {"basis", to_string(cv.kind)}, {"M", cv.count}});
    }
    return {{"Q", c.Q},
            {"interval_basis", to_string(c.interval_kind)},
            {"covariates", covs},
            {"weights", to_string(c.weight_kind)},
            {"T", c.T},
            {"U", c.U},
            {"L_alpha", c.L_alpha},
            {"L_beta", c.L_beta},
            {"intraday_share", c.intraday_share},
            {"lambda", c.lambda},
            {"method", to_string(c.method)},
            {"day_classes", c.scheme == DayClassScheme::PerWeekday ? "weekday" : "workday_holiday"},
            {"lag_indexing", to_string(c.lags)},
            {"tol", c.tol}};
}

inline DayClassScheme parse_scheme(const std::string& s) {
    if (s == "weekday") return DayClassScheme::PerWeekday;
    if (s == "workday_holiday") return DayClassScheme::WorkdayHoliday;
    throw ConfigError("unknown day class scheme '" + s + "'");
}

inline ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.Q = j.at("Q").get<int>();
    c.interval_kind = parse_basis_kind(j.at("interval_basis").get<std::string>());
    c.covariates.clear();
    for (const auto& cv : j.at("covariates")) {
        c.covariates.push_back({cv.at("name").get<std::string>(),
                                parse_basis_kind(cv.at("basis").get<std::string>()), cv.at("M").get<int>()});
    }
    c.weight_kind = parse_weight_kind(j.at("weights").get<std::string>());
    c.T = j.at("T").get<int>();
    c.U = j.at("U").get<int>();
    c.L_alpha = j.at("L_alpha").get<int>();
    c.L_beta = j.at("L_beta").get<int>();
    c.intraday_share = j.at("intraday_share").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.method = parse_solve_method(j.at("method").get<std::string>());
    c.scheme = parse_scheme(j.at("day_classes").get<std::string>());
    c.lags = parse_lag_indexing(j.at("lag_indexing").get<std::string>());
    c.tol = j.at("tol").get<double>();
    return c;
}

} // namespace detail

inline void write_model(std::ostream& os, const FittedModel& m) {
    using detail::json;
    json groups = json::array();
    for (const auto& g : m.design.groups) groups.push_back({{"name", g.name}, {"basis", detail::to_json(g.spec)}});
    json classes = json::array();
    for (const auto& [cls, cf] : m.classes) {
        std::vector<double> gamma(cf.gamma.data(), cf.gamma.data() + cf.gamma.size());
        classes.push_back({{"day_class", cls},
                           {"gamma", gamma},
                           {"active_set", cf.active_set},
                           {"sigma2", detail::num_or_null(cf.sigma2)},
                           {"rows", cf.rows},
                           {"objective", cf.objective}});
    }
    const json body = {{"config", detail::to_json(m.config)},
                       {"intervals", m.intervals},
                       {"interval_basis", detail::to_json(m.design.interval_basis)},
                       {"groups", groups},
                       {"alpha", m.design.weights.alpha},
                       {"beta", m.design.weights.beta},
                       {"train_first", format_date(m.train_first)},
                       {"train_end", format_date(m.train_end)},
                       {"window_hash", std::to_string(m.window_hash)},
                       {"classes", classes}};
    os << kModelMagic << '\n' << body.dump(1) << '\n';
}

inline FittedModel read_model(std::istream& is) {
    using detail::json;
    std::string magic;
    if (!std::getline(is, magic) || magic != kModelMagic) {
        throw ModelFileError("not a model file (bad header)");
    }
    try {
        const json body = json::parse(is);
        FittedModel m;
        m.config = detail::config_from_json(body.at("config"));
        m.intervals = body.at("intervals").get<int>();
        auto& d = m.design;
        d.scheme = m.config.scheme;
        d.lags = m.config.lags;
        d.weights = build_weights(m.config.weight_kind, m.config.T, m.config.U, m.config.L_alpha,
                                  m.config.L_beta, m.config.intraday_share);
        // stored weights take precedence so a file is read back bit-exact
        d.weights.alpha = body.at("alpha").get<std::vector<double>>();
        d.weights.beta = body.at("beta").get<std::vector<double>>();
        d.interval_basis = detail::basis_from_json(body.at("interval_basis"));
        for (const auto& g : body.at("groups")) {
            d.groups.push_back({g.at("name").get<std::string>(), detail::basis_from_json(g.at("basis"))});
        }
        m.train_first = parse_date(body.at("train_first").get<std::string>());
        m.train_end = parse_date(body.at("train_end").get<std::string>());
        m.window_hash = std::stoull(body.at("window_hash").get<std::string>());
        const int Q = d.Q(), M = d.M_total();
        for (const auto& c : body.at("classes")) {
            ClassFit cf;
            cf.day_class = c.at("day_class").get<int>();
            const auto gamma = c.at("gamma").get<std::vector<double>>();
            if (static_cast<int>(gamma.size()) != Q * M) throw ModelFileError("coefficient count mismatch");
            cf.gamma = Eigen::Map<const Eigen::MatrixXd>(gamma.data(), Q, M);
            cf.active_set = c.at("active_set").get<std::vector<int>>();
            cf.sigma2 = detail::num_from(c.at("sigma2"));
            cf.rows = c.at("rows").get<Eigen::Index>();
            cf.objective = c.at("objective").get<double>();
            m.classes.emplace(cf.day_class, std::move(cf));
        }
        return m;
    } catch (const ModelFileError&) {
        throw;
    } catch (const std::exception& e) {
        throw ModelFileError(std::string("corrupt model file: ") + e.what());
    }
}

inline void save_model(const std::string& path, const FittedModel& m) {
    std::ofstream os(path);
    if (!os) throw ModelFileError("cannot write " + path);
    write_model(os, m);
    if (!os) throw ModelFileError("write failed for " + path);
}

inline FittedModel load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ModelFileError("cannot open " + path);
    return read_model(is);
}

} // namespace vcload
