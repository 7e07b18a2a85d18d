#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcload/error.hpp"

namespace vcload {

enum class SolveMethod { LSE, NNLS };

inline std::string to_string(SolveMethod m) { return m == SolveMethod::LSE ? "lse" : "nnls"; }

inline SolveMethod parse_solve_method(std::string_view name) {
    if (name == "lse") return SolveMethod::LSE;
    if (name == "nnls") return SolveMethod::NNLS;
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

struct SolveOptions {
    SolveMethod method = SolveMethod::NNLS;
    double lambda = 0.0;
    double tol = 1e-10;  // relative dual-feasibility / support tolerance
    int max_passes = 0;  // 0 means 3 x column count
};

struct Solution {
    Eigen::VectorXd gamma;
    std::vector<int> active_set; // sorted; all indices for LSE
    double objective = 0.0;
    int passes = 0;
};

/// KKT diagnostics of min ||y - X g||^2 + lambda ||g||^2 s.t. g >= 0, with
/// mu = X^T X g - X^T y + lambda g (half the gradient).
struct KktResiduals {
    double primal_violation = 0.0;   // max(-g, 0)
    double stationarity = 0.0;       // max |mu_j| over the support
    double dual_infeasibility = 0.0; // max(-mu_j, 0) off the support
    double complementarity = 0.0;    // |g^T mu|

    double max() const {
        return std::max({primal_violation, stationarity, dual_infeasibility, complementarity});
    }
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, Solution best, KktResiduals kkt)
        : Error("nonconvergence", what), best_(std::move(best)), kkt_(kkt) {}

    const Solution& best_iterate() const noexcept { return best_; }
    const KktResiduals& kkt() const noexcept { return kkt_; }

private:
    Solution best_;
    KktResiduals kkt_;
};

inline KktResiduals kkt_residuals(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                                  const Eigen::VectorXd& gamma) {
    if (X.rows() != y.size() || X.cols() != gamma.size()) throw ShapeError("kkt_residuals: shape mismatch");
    const Eigen::VectorXd mu = X.transpose() * (X * gamma - y) + lambda * gamma;
    KktResiduals r;
    for (Eigen::Index j = 0; j < gamma.size(); ++j) {
        r.primal_violation = std::max(r.primal_violation, -gamma(j));
        if (gamma(j) > 0.0) {
            r.stationarity = std::max(r.stationarity, std::abs(mu(j)));
        } else {
            r.dual_infeasibility = std::max(r.dual_infeasibility, -mu(j));
        }
    }
    r.complementarity = std::abs(gamma.dot(mu));
    return r;
}

inline double ridge_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                              const Eigen::VectorXd& gamma) {
    return (y - X * gamma).squaredNorm() + lambda * gamma.squaredNorm();
}

/// Appends sqrt(lambda) I rows to X and zeros to y.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> ridge_augment(const Eigen::MatrixXd& X,
                                                                 const Eigen::VectorXd& y,
                                                                 double lambda) {
    const Eigen::Index n = X.rows(), p = X.cols();
    Eigen::MatrixXd A(n + p, p);
    A.topRows(n) = X;
    A.bottomRows(p) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + p);
    b.head(n) = y;
    return {std::move(A), std::move(b)};
}

namespace detail {

inline void check_problem(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    if (X.cols() < 1) throw ShapeError("design has no columns");
    if (X.rows() != y.size()) throw ShapeError("design and response lengths differ");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!X.allFinite() || !y.allFinite()) throw EvaluationError("non-finite entries in the problem");
}

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& G, const std::vector<int>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd out(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) out(a, b) = G(idx[a], idx[b]);
    return out;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) out(static_cast<Eigen::Index>(a)) = v(idx[a]);
    return out;
}

inline Eigen::MatrixXd columns(const Eigen::MatrixXd& A, const std::vector<int>& idx) {
    Eigen::MatrixXd out(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) out.col(static_cast<Eigen::Index>(a)) = A.col(idx[a]);
    return out;
}

// Lawson-Hanson active set for min ||b - A x|| s.t. x >= 0, run on the Gram
// form. Entering and leaving ties resolve to the smallest index.
inline Solution nnls_active_set(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol,
                                int max_passes) {
    const Eigen::Index p = A.cols();
    const Eigen::MatrixXd G = A.transpose() * A;
    const Eigen::VectorXd c = A.transpose() * b;
    const double dual_tol = tol * std::max(1.0, c.cwiseAbs().maxCoeff());
    const double dep_tol = 1e-12;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    std::vector<char> passive(static_cast<std::size_t>(p), 0);
    std::vector<char> banned(static_cast<std::size_t>(p), 0);
    int passes = 0;

    auto passive_list = [&] {
        std::vector<int> idx;
        for (Eigen::Index j = 0; j < p; ++j)
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(static_cast<int>(j));
        return idx;
    };

    while (true) {
        const Eigen::VectorXd w = c - G * x;
        int enter = -1;
        double best = dual_tol;
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto js = static_cast<std::size_t>(j);
            if (passive[js] || banned[js]) continue;
            if (w(j) > best) {
                best = w(j);
                enter = static_cast<int>(j);
            }
        }
        if (enter < 0) break;

        if (++passes > max_passes) {
            Solution s;
            s.gamma = x;
            s.passes = passes;
            s.objective = (b - A * x).squaredNorm();
            throw NonConvergenceError("NNLS active-set iteration cap exceeded", s, KktResiduals{});
        }

        // reject columns that are numerically dependent on the passive set
        {
            const auto P = passive_list();
            double schur = G(enter, enter);
            if (!P.empty()) {
                const Eigen::LLT<Eigen::MatrixXd> llt(gather(G, P));
                Eigen::VectorXd g_col(static_cast<Eigen::Index>(P.size()));
                for (std::size_t a = 0; a < P.size(); ++a) g_col(static_cast<Eigen::Index>(a)) = G(P[a], enter);
                schur -= g_col.dot(llt.solve(g_col));
            }
            if (!(schur > dep_tol * std::max(G(enter, enter), 1e-300))) {
                banned[static_cast<std::size_t>(enter)] = 1;
                continue;
            }
        }

        passive[static_cast<std::size_t>(enter)] = 1;
        bool first_inner = true;
        while (true) {
            const auto P = passive_list();
            const Eigen::LLT<Eigen::MatrixXd> llt(gather(G, P));
            const Eigen::VectorXd zP = llt.solve(gather(c, P));
            Eigen::VectorXd z = Eigen::VectorXd::Zero(p);
            for (std::size_t a = 0; a < P.size(); ++a) z(P[a]) = zP(static_cast<Eigen::Index>(a));

            if (first_inner && z(enter) <= 0.0) {
                // cannot enter (rounding); leave it out until the set changes
                passive[static_cast<std::size_t>(enter)] = 0;
                banned[static_cast<std::size_t>(enter)] = 1;
                break;
            }
            first_inner = false;

            bool feasible = true;
            for (int j : P) feasible = feasible && z(j) > 0.0;
            if (feasible) {
                x = z;
                std::fill(banned.begin(), banned.end(), 0);
                break;
            }
            double step = 1.0;
            int leave = -1;
            for (int j : P) {
                if (z(j) > 0.0) continue;
                const double r = x(j) / (x(j) - z(j));
                if (r < step || leave < 0) {
                    step = r;
                    leave = j;
                }
            }
            x += step * (z - x);
            x(leave) = 0.0;
            for (int j : P) {
                if (x(j) <= 0.0) {
                    x(j) = 0.0;
                    passive[static_cast<std::size_t>(j)] = 0;
                }
            }
            if (passive_list().empty()) break;
        }
    }

    // snap floating dust, then polish on the final support with a QR solve
    const double xmax = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
    for (Eigen::Index j = 0; j < p; ++j)
        if (x(j) <= tol * xmax) x(j) = 0.0;
    std::vector<int> S;
    for (Eigen::Index j = 0; j < p; ++j)
        if (x(j) > 0.0) S.push_back(static_cast<int>(j));
    if (!S.empty()) {
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(columns(A, S));
        if (qr.rank() == static_cast<Eigen::Index>(S.size())) {
            const Eigen::VectorXd zS = qr.solve(b);
            if ((zS.array() > 0.0).all()) {
                for (std::size_t a = 0; a < S.size(); ++a) x(S[a]) = zS(static_cast<Eigen::Index>(a));
            }
        }
    }

    Solution s;
    s.gamma = x;
    s.active_set = S;
    s.passes = passes;
    s.objective = (b - A * x).squaredNorm();
    return s;
}

} // namespace detail

/// Ridge least squares via the normal equations (lambda > 0) or a rank
/// revealing QR (lambda = 0).
inline Solution solve_lse_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    detail::check_problem(X, y, lambda);
    Solution s;
    if (lambda == 0.0) {
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < X.cols()) {
            throw RankDeficiencyError("least squares design is rank deficient at lambda = 0; use lambda > 0");
        }
        s.gamma = qr.solve(y);
    } else {
        Eigen::MatrixXd G = X.transpose() * X;
        G.diagonal().array() += lambda;
        const Eigen::LLT<Eigen::MatrixXd> llt(G);
        if (llt.info() != Eigen::Success) throw RankDeficiencyError("ridge normal equations are not positive definite");
        s.gamma = llt.solve(X.transpose() * y);
    }
    s.active_set.resize(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) s.active_set[static_cast<std::size_t>(j)] = static_cast<int>(j);
    s.objective = ridge_objective(X, y, lambda, s.gamma);
    s.passes = 1;
    return s;
}

/// Ridge-penalized NNLS. The penalty is handled by row augmentation, so this
/// is the same computation as solve_nnls(ridge_augment(X, y, lambda), 0).
inline Solution solve_nnls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                           const SolveOptions& options = {}) {
    detail::check_problem(X, y, lambda);
    if (!(options.tol > 0.0)) throw ConfigError("tol must be > 0");
    const int max_passes = options.max_passes > 0 ? options.max_passes : 3 * static_cast<int>(X.cols());
    try {
        if (lambda == 0.0) {
            Solution s = detail::nnls_active_set(X, y, options.tol, max_passes);
            s.objective = ridge_objective(X, y, 0.0, s.gamma);
            return s;
        }
        const auto [A, b] = ridge_augment(X, y, lambda);
        Solution s = detail::nnls_active_set(A, b, options.tol, max_passes);
        s.objective = ridge_objective(X, y, lambda, s.gamma);
        return s;
    } catch (const NonConvergenceError& e) {
        Solution best = e.best_iterate();
        best.objective = ridge_objective(X, y, lambda, best.gamma);
        throw NonConvergenceError(e.what(), best, kkt_residuals(X, y, lambda, best.gamma));
    }
}

inline Solution solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SolveOptions& options) {
    return options.method == SolveMethod::LSE ? solve_lse_ridge(X, y, options.lambda)
                                               : solve_nnls(X, y, options.lambda, options);
}

} // namespace vcload
