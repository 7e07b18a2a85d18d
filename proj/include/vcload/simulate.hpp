#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "vcload/forecast.hpp"

namespace vcload {

/// Synthetic data drawn from the model itself: the load level net of the
/// covariate effect follows the weighted past-load recursion, and the
/// covariate effect uses a known nonnegative Gamma per day class.
struct SimulationSpec {
    Date first = parse_date("2019-01-01");
    int days = 730;
    int intervals = 24;
    ModelConfig config;
    double base_level = 100.0;
    double profile_amplitude = 20.0;
    double noise_sd = 1.0;
    double gamma_scale = 2.0;
    double temp_mean = 16.0;
    double temp_amplitude = 10.0;
    double temp_noise = 2.0;
    double temp_uniform = 0.0; // half-width of an extra uniform daily draw
    std::vector<Date> holidays;
    std::uint64_t seed = 1;
};

struct SimulatedData {
    LoadPanel panel;
    CovariateTable covs;
    FittedModel truth; // coefficients that generated the loads
};

inline SimulatedData simulate(const SimulationSpec& sim) {
    if (sim.days < 1 || sim.intervals < 3) throw ConfigError("simulation needs days >= 1 and J >= 3");
    std::mt19937_64 rng(sim.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int J = sim.intervals;

    SimulatedData out;
    auto& covs = out.covs;
    covs.first_date = sim.first;
    for (const auto& c : sim.config.covariates) covs.names.push_back(c.name);
    covs.values.resize(sim.days, static_cast<Eigen::Index>(covs.names.size()));
    for (int i = 0; i < sim.days; ++i) {
        for (Eigen::Index k = 0; k < covs.values.cols(); ++k) {
            const double season = std::sin(2.0 * std::numbers::pi * (i + 91.0 * static_cast<double>(k)) / 365.25);
            covs.values(i, k) = sim.temp_mean + sim.temp_amplitude * season + sim.temp_noise * normal(rng) +
                                sim.temp_uniform * (2.0 * unif(rng) - 1.0);
        }
    }
    // polynomial groups take a nonnegative input of order one
    for (std::size_t k = 0; k < sim.config.covariates.size(); ++k) {
        if (!is_spline(sim.config.covariates[k].kind)) {
            auto col = covs.values.col(static_cast<Eigen::Index>(k));
            const double spread = std::max(sim.temp_amplitude + sim.temp_noise + sim.temp_uniform, 1e-12);
            col = ((col.array() - sim.temp_mean) / spread).abs().matrix();
        }
    }

    auto& panel = out.panel;
    panel.first_date = sim.first;
    panel.holidays.insert(sim.holidays.begin(), sim.holidays.end());
    panel.loads = Eigen::MatrixXd::Zero(sim.days, J);
    panel.valid.assign(static_cast<std::size_t>(sim.days), true);

    // truth model over the full sample (same knot rule as fit)
    FittedModel& truth = out.truth;
    truth.config = sim.config;
    truth.design = make_design_spec(panel, covs, sim.config);
    truth.intervals = J;
    truth.train_first = panel.first_date;
    truth.train_end = panel.end_date();
    const int Q = truth.design.Q(), M = truth.design.M_total();
    for (int cls = 0; cls < day_class_count(sim.config.scheme); ++cls) {
        ClassFit cf;
        cf.day_class = cls;
        cf.gamma.resize(Q, M);
        for (int m = 0; m < M; ++m) {
            for (int q = 0; q < Q; ++q) cf.gamma(q, m) = sim.gamma_scale * unif(rng);
        }
        for (std::size_t k = 0; k < truth.design.groups.size(); ++k) {
            const BasisSpec& g = truth.design.groups[k].spec;
            const int off = truth.design.group_offset(k);
            if (is_spline(g.kind)) {
                // Spline rows sum to one, so a constant added across a block
                // row is invisible after lag differencing. A zero in every
                // block row makes Gamma the minimum-norm member of that family;
                // the middle function carries the most data.
                cf.gamma.col(off + g.count / 2).setZero();
            } else if (g.kind == BasisKind::NegatedCubicPolynomial) {
                // drop the even term so the generated effect is <= 0 for inputs >= 0
                cf.gamma.col(off + 1).setZero();
            }
        }
        truth.classes.emplace(cls, std::move(cf));
    }

    const auto& spec = truth.design;
    const auto columns = covariate_columns(spec, covs);
    Eigen::MatrixXd level(sim.days, J);
    Eigen::MatrixXd effect(sim.days, J);
    for (int i = 0; i < sim.days; ++i) {
        const Date d = panel.date(i);
        std::vector<double> s;
        for (int c : columns) s.push_back(covs.value(d, c));
        effect.row(i) = weather_effect_curve(truth, panel.class_of(d, spec.scheme), s).transpose();

        const auto lags = day_lag_dates(spec, panel, covs, columns, d);
        for (int j = 1; j <= J; ++j) {
            double c = 0.0;
            if (lags) {
                const RowWeights rw = row_weights(spec.weights, j, [](int) { return true; });
                for (std::size_t t = 0; t < rw.day.size(); ++t) c += rw.day[t] * level(*panel.row_of((*lags)[t]), j - 1);
                for (const auto& [src, w] : rw.within) c += w * level(i, src - 1);
            } else {
                const double phase = 2.0 * std::numbers::pi * (j - 1) / J;
                c = sim.base_level - sim.profile_amplitude * std::cos(phase);
            }
            level(i, j - 1) = c + sim.noise_sd * normal(rng);
        }
        // loads must exist before later rows look them up
        panel.loads.row(i) = level.row(i) + effect.row(i);
    }
    return out;
}

} // namespace vcload
