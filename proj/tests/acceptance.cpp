// Acceptance runner: one PASS/FAIL/SKIP line per criterion, nonzero exit on
// any failure.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "vcload/cli.hpp"
#include "vcload/eval.hpp"
#include "vcload/simulate.hpp"

using namespace vcload;
namespace fs = std::filesystem;

namespace tol {
constexpr double nnls_objective = 1e-8;
constexpr double nnls_seconds = 30.0;
constexpr double kkt = 1e-8;
constexpr double assembly = 1e-10;
constexpr double recovery = 1e-6;
constexpr double root = 1e-12;
constexpr double root_sum = 1e-10;
constexpr int coverage_reps = 2000;
constexpr double coverage_lo = 0.93;
constexpr double coverage_hi = 0.97;
constexpr double ks_p = 0.01;
constexpr double coverage_seconds = 300.0;
constexpr double z_limit = 1e-6;
constexpr std::size_t grid_size = 336;
constexpr double real_data_pp = 1.0;
} // namespace tol

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string num(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> n;
    return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return n(rng); });
}

Outcome nnls_equivalence() {
    std::mt19937_64 rng(1001);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::uniform_int_distribution<int> cols(1, 8);
    for (int rep = 0; rep < 500; ++rep) {
        const int p = cols(rng);
        const int n = std::uniform_int_distribution<int>(p, 20)(rng);
        const Eigen::MatrixXd X = gaussian(rng, n, p);
        const Eigen::VectorXd y = gaussian(rng, n, 1);
        const double lambda = rep % 2 ? 0.0 : 1e-3;
        const double got = solve_nnls(X, y, lambda).objective;
        const double want = oracle::nnls_enumerate(X, y, lambda);
        worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
    }
    const double secs = seconds_since(t0);
    return check(worst <= tol::nnls_objective && secs < tol::nnls_seconds,
                 "max rel gap " + num(worst) + ", " + num(secs) + " s");
}

Outcome kkt_certification() {
    std::mt19937_64 rng(1002);
    double worst = 0.0;
    int solves = 0;
    for (int rep = 0; rep < 500; ++rep) {
        const int p = 1 + rep % 12;
        const Eigen::MatrixXd X = gaussian(rng, 10 + rep % 30, p);
        const Eigen::VectorXd y = gaussian(rng, X.rows(), 1);
        for (double lambda : {0.0, 1e-6, 1e-2, 1.0}) {
            const Solution s = solve_nnls(X, y, lambda);
            worst = std::max(worst, kkt_residuals(X, y, lambda, s.gamma).max());
            ++solves;
        }
    }
    // fits on model-shaped designs as well
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SimulationSpec sim;
        sim.days = 120;
        sim.seed = seed;
        const auto sd = simulate(sim);
        const FittedModel m = fit(sd.panel, sd.covs, sim.config);
        for (const auto& [cls, cf] : m.classes) {
            const DesignSystem sys = training_design(m, sd.panel, sd.covs, cls);
            const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(cf.gamma.data(), cf.gamma.size());
            worst = std::max(worst, kkt_residuals(sys.X, sys.y_tilde, sim.config.lambda, g).max());
            ++solves;
        }
    }
    return check(worst <= tol::kkt, std::to_string(solves) + " solves, max residual " + num(worst));
}

Outcome assembly_equivalence() {
    std::mt19937_64 rng(1003);
    std::uniform_real_distribution<double> g(-1.0, 2.0);
    double worst = 0.0;
    std::size_t rows = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const int J = rep % 2 ? 24 : 8;
        const auto data = testdata::random_panel(rng, 60, J);
        const ModelConfig cfg = testdata::random_config(rng);
        const DesignSpec spec = make_design_spec(data.panel, data.covs, cfg);
        const Eigen::MatrixXd gamma = Eigen::MatrixXd::NullaryExpr(spec.Q(), spec.M_total(), [&] { return g(rng); });
        const Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(gamma.data(), gamma.size());
        oracle::ScalarModel ref{data.panel, data.covs, spec, gamma};
        for (int cls = 0; cls < day_class_count(cfg.scheme); ++cls) {
            DesignSystem sys;
            try {
                sys = assemble(data.panel, data.covs, spec, cls);
            } catch (const EmptyDesignError&) {
                continue;
            }
            const Eigen::VectorXd pred = sys.q_offsets + sys.X * gv;
            for (Eigen::Index r = 0; r < sys.X.rows(); ++r) {
                const auto& row = sys.row_index[static_cast<std::size_t>(r)];
                const double want = ref.predict(row.date, row.interval);
                worst = std::max(worst, std::abs(pred(r) - want) / std::max(1.0, std::abs(want)));
                ++rows;
            }
        }
    }
    return check(worst <= tol::assembly && rows > 0, std::to_string(rows) + " rows, max gap " + num(worst));
}

Outcome parameter_recovery() {
    SimulationSpec sim;
    sim.days = 200;
    sim.intervals = 24;
    sim.noise_sd = 0.0;
    sim.seed = 1004;
    // i.i.d. uniform temperature keeps every spline function supported
    sim.temp_amplitude = 0.0;
    sim.temp_noise = 0.0;
    sim.temp_uniform = 12.0;
    sim.config.Q = 5;
    sim.config.covariates = {{"temperature", BasisKind::CubicBSpline, 5}};
    sim.config.T = 2;
    const auto sd = simulate(sim);
    ModelConfig cfg = sim.config;
    cfg.lambda = 1e-8;
    const FittedModel m = fit(sd.panel, sd.covs, cfg);
    double worst = 0.0;
    for (const auto& [cls, cf] : m.classes) {
        worst = std::max(worst, (cf.gamma - sd.truth.class_fit(cls).gamma).cwiseAbs().maxCoeff());
    }
    return check(worst <= tol::recovery, std::to_string(m.classes.size()) + " classes, max error " + num(worst));
}

// The negated group is (-s, s^2, -s^3) with nonnegative weights c1, c2, c3
// per interval; it is <= 0 on s >= 0 exactly when c2^2 <= 4 c1 c3.
bool negated_group_certified(const Eigen::MatrixXd& curves, int off, Eigen::Index j) {
    const double c1 = curves(j, off), c2 = curves(j, off + 1), c3 = curves(j, off + 2);
    return c2 == 0.0 || c2 * c2 <= 4.0 * c1 * c3;
}

Outcome sign_properties() {
    std::mt19937_64 rng(1005);
    double min_spline = std::numeric_limits<double>::infinity();
    double max_certified = -std::numeric_limits<double>::infinity();
    double max_generated = -std::numeric_limits<double>::infinity();
    std::size_t emitted = 0, certified = 0;
    for (int rep = 0; rep < 6; ++rep) {
        // spline-only fits on noisy random panels
        auto data = testdata::random_panel(rng, 90, 12, 0.02);
        ModelConfig cfg = testdata::random_config(rng);
        cfg.U = 0;
        cfg.covariates = {{"temperature", BasisKind::CubicBSpline, 6}};
        const FittedModel r = fit(data.panel, data.covs, cfg);
        for (const auto& [cls, cf] : r.classes) {
            for (double t = -15; t <= 45; t += 1.0) {
                const std::vector<double> s{t};
                min_spline = std::min(min_spline, weather_effect_curve(r, cls, s).minCoeff());
                ++emitted;
            }
        }

        // spline plus negated group, noisy and noiseless
        for (double noise : {1.0, 0.0}) {
            SimulationSpec sim;
            sim.days = 200;
            sim.noise_sd = noise;
            sim.seed = 2000 + static_cast<std::uint64_t>(rep);
            sim.config = cfg;
            sim.config.covariates = {{"temperature", BasisKind::CubicBSpline, 5},
                                     {"cases", BasisKind::NegatedCubicPolynomial, 3}};
            if (noise == 0.0) {
                sim.config.lambda = 1e-8;
                sim.temp_amplitude = 0.0;
                sim.temp_noise = 0.0;
                sim.temp_uniform = 12.0;
            }
            const auto sd = simulate(sim);
            const FittedModel m = fit(sd.panel, sd.covs, sim.config);
            const int off = m.design.group_offset(1);
            for (Date d = add_days(sd.panel.first_date, 150); d < sd.panel.end_date(); d = add_days(d, 1)) {
                const int cls = sd.panel.class_of(d, m.design.scheme);
                const Eigen::MatrixXd curves = coefficient_curves(m, cls);
                const auto b = predict_day_ahead(m, truncate_before(sd.panel, d), sd.covs, d);
                for (const auto& p : b.points) {
                    min_spline = std::min(min_spline, p.b_groups[0]);
                    if (noise == 0.0) max_generated = std::max(max_generated, p.b_groups[1]);
                    if (negated_group_certified(curves, off, p.interval - 1)) {
                        max_certified = std::max(max_certified, p.b_groups[1]);
                        ++certified;
                    }
                    ++emitted;
                }
            }
        }
    }
    return check(min_spline >= 0.0 && max_certified <= 0.0 && max_generated <= tol::recovery,
                 std::to_string(emitted) + " values, min spline " + num(min_spline) + ", max negated " +
                     num(max_certified) + " over " + std::to_string(certified) +
                     " certified, max negated on decreasing truth " + num(max_generated));
}

Outcome ar1_roots() {
    const double r2 = solve_ar1_rho(2);
    const double r4 = solve_ar1_rho(4);
    const double e2 = std::abs(r2 - (std::sqrt(5.0) - 1.0) / 2.0);
    const double e4 = std::abs(std::pow(r4, 5) - 2.0 * r4 + 1.0);
    const double s4 = std::abs(r4 + r4 * r4 + r4 * r4 * r4 + r4 * r4 * r4 * r4 - 1.0);
    return check(e2 <= tol::root && e4 <= tol::root && s4 <= tol::root_sum,
                 "T=2 error " + num(e2) + ", T=4 residual " + num(e4) + ", sum error " + num(s4));
}

// Asymptotic Kolmogorov distribution tail for sqrt(n) D_n.
double ks_pvalue(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - u[i], u[i] - static_cast<double>(i) / n});
    }
    const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) p += 2.0 * (k % 2 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * t * t);
    return std::clamp(p, 0.0, 1.0);
}

Outcome coverage() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1007);
    std::normal_distribution<double> n01;
    const int n = 50, p = 6;
    const Eigen::MatrixXd X = gaussian(rng, n, p);
    Eigen::VectorXd beta(p);
    beta << 1.0, 0.5, 0.0, 0.2, 0.0, 0.0;
    const Eigen::VectorXd mu = X * beta;
    int accepted = 0, hits = 0, attempts = 0;
    std::vector<double> pivots;
    while (accepted < tol::coverage_reps && attempts < 20 * tol::coverage_reps) {
        ++attempts;
        const Eigen::VectorXd y = mu + Eigen::VectorXd::NullaryExpr(n, [&] { return n01(rng); });
        const Solution s = solve_nnls(X, y, 0.0);
        if (s.active_set.empty()) continue;
        // contrast: the first selected coefficient of the refit
        const Eigen::VectorXd x_new = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(s.active_set.size()), 0);
        TruncatedInterval ti;
        try {
            ti = selective_interval(X, y, s.active_set, x_new, 1.0, 0.05);
        } catch (const Error&) {
            continue;
        }
        const double target = ti.eta.dot(mu);
        const SelectionEvent ev = selection_event(X, s.active_set);
        const TruncationBounds tb = truncation_bounds(ev, ti.eta, y);
        pivots.push_back(selective_pivot(tb, target, ti.eta.squaredNorm()));
        hits += ti.lo <= target && target <= ti.hi;
        ++accepted;
    }
    const double rate = accepted ? static_cast<double>(hits) / accepted : 0.0;
    const double pv = ks_pvalue(pivots);
    const double secs = seconds_since(t0);
    return check(accepted >= tol::coverage_reps && rate >= tol::coverage_lo && rate <= tol::coverage_hi &&
                     pv > tol::ks_p && secs < tol::coverage_seconds,
                 std::to_string(accepted) + " reps, coverage " + num(rate) + ", KS p " + num(pv) + ", " +
                     num(secs) + " s");
}

Outcome z_limit() {
    const double inf = std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double alpha : {0.01, 0.05, 0.1, 0.32}) {
        // two-sided normal quantile by bisection on the oracle CDF
        double lo = 0.0, hi = 10.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (oracle::norm_cdf(mid) < 1.0 - alpha / 2.0 ? lo : hi) = mid;
        }
        const double z = 0.5 * (lo + hi);
        for (double est : {-4.0, 0.0, 2.5, 100.0}) {
            for (double s2 : {0.01, 1.0, 16.0}) {
                const TruncatedInterval ti = interval_from_bounds(est, s2, -inf, inf, alpha);
                worst = std::max({worst, std::abs(ti.lo - (est - z * std::sqrt(s2))),
                                  std::abs(ti.hi - (est + z * std::sqrt(s2)))});
            }
        }
    }
    return check(worst <= tol::z_limit, "max endpoint gap " + num(worst));
}

Outcome grid_arithmetic() {
    const std::size_t n = grid_enumerate(TuningGrid{}).size();
    return check(n == tol::grid_size, std::to_string(n) + " candidates");
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

Outcome golden_file(const fs::path& fixture) {
    const fs::path tmp = fs::temp_directory_path() / "vcload_acceptance_backtest";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    std::ostringstream out, err;
    const int status = run_command({"backtest", "--config", (fixture / "config.json").string(), "--out", tmp.string()},
                                   out, err);
    if (status != 0) return check(false, "backtest exited " + std::to_string(status) + ": " + err.str());
    const std::string got = slurp(tmp / "monthly.csv");
    const std::string want = slurp(fixture / "monthly_golden.csv");
    fs::remove_all(tmp);
    return check(!want.empty() && got == want, got == want ? "monthly table identical" : "monthly table differs");
}

// Real-data check: VCLOAD_TEPCO_CONFIG / VCLOAD_GEFCOM_CONFIG name a
// backtest config over the prepared data.
Outcome real_data() {
    const std::vector<std::pair<const char*, double>> sets{{"VCLOAD_TEPCO_CONFIG", 4.6}, {"VCLOAD_GEFCOM_CONFIG", 3.5}};
    std::string detail;
    bool any = false, ok = true;
    for (const auto& [env, target] : sets) {
        const char* path = std::getenv(env);
        if (!path || !fs::exists(path)) continue;
        any = true;
        const RunConfig rc = load_config(path);
        const IngestResult data = ingest(rc.loads, rc.covariates, rc.holidays, rc.ingest);
        BacktestProtocol p = rc.protocol;
        if (rc.eval_first) p.eval_first = parse_date(*rc.eval_first);
        if (rc.eval_last) p.eval_last = parse_date(*rc.eval_last);
        const auto rep = rolling_backtest(data.panel, data.covs, rc.grid, p);
        const bool pass = std::abs(rep.total_mape - target) <= tol::real_data_pp;
        ok = ok && pass;
        detail += std::string(env) + " total MAPE " + num(rep.total_mape) + " (target " + num(target) + ") ";
    }
    if (!any) return {Verdict::Skip, "no real data configured"};
    return check(ok, detail);
}

} // namespace

int main(int argc, char** argv) {
    const fs::path fixture = argc > 1 ? fs::path(argv[1]) : fs::path(VCLOAD_FIXTURE_DIR);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"nnls matches support enumeration", nnls_equivalence},
        {"kkt certification", kkt_certification},
        {"design assembly matches scalar model", assembly_equivalence},
        {"noiseless parameter recovery", parameter_recovery},
        {"effect sign properties", sign_properties},
        {"ar1 weight roots", ar1_roots},
        {"post-selection coverage", coverage},
        {"untruncated z-interval limit", z_limit},
        {"tuning grid size", grid_arithmetic},
        {"backtest golden monthly table", [&] { return golden_file(fixture); }},
        {"real-data total mape", real_data},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {Verdict::Fail, std::string("threw: ") + e.what()};
        }
        const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
        failures += o.verdict == Verdict::Fail;
        std::cout << tag << ' ' << i + 1 << ' ' << criteria[i].first << ": " << o.detail << std::endl;
    }
    return failures ? 1 : 0;
}
