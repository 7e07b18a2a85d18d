#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "vcload/solver.hpp"

using namespace vcload;

namespace {

struct Instance {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

Instance random_instance(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> n;
    Instance in;
    in.X = Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return n(rng); });
    in.y = Eigen::VectorXd::NullaryExpr(rows, [&] { return n(rng); });
    return in;
}

} // namespace

TEST(Nnls, IdentityDesignClips) {
    const Solution s = solve_nnls(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(3.0, -1.0), 0.0);
    EXPECT_EQ(s.gamma, Eigen::Vector2d(3.0, 0.0));
    EXPECT_EQ(s.active_set, std::vector<int>{0});
}

TEST(Nnls, PositiveUnconstrainedSolutionIsUnchanged) {
    Eigen::MatrixXd X(4, 2);
    X << 1, 0, 1, 1, 1, 2, 1, 3;
    const Eigen::Vector2d truth(1.0, 2.0);
    const Eigen::VectorXd y = X * truth;
    const Solution s = solve_nnls(X, y, 0.0);
    EXPECT_LT((s.gamma - truth).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nnls, AllNegativeCorrelationGivesZero) {
    Eigen::MatrixXd X = Eigen::MatrixXd::Identity(3, 3);
    const Solution s = solve_nnls(X, Eigen::Vector3d(-1, -2, -3), 0.0);
    EXPECT_EQ(s.gamma, Eigen::Vector3d::Zero());
    EXPECT_TRUE(s.active_set.empty());
}

TEST(Nnls, MatchesSupportEnumeration) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> cols(1, 8);
    for (int rep = 0; rep < 300; ++rep) {
        const int p = cols(rng);
        const int n = std::uniform_int_distribution<int>(p, 20)(rng);
        const auto in = random_instance(rng, n, p);
        const double lambda = rep % 3 == 0 ? 0.0 : std::pow(10.0, -4 + rep % 5);
        const Solution s = solve_nnls(in.X, in.y, lambda);
        const double want = oracle::nnls_enumerate(in.X, in.y, lambda);
        EXPECT_LE(std::abs(s.objective - want), 1e-8 * std::max(1.0, want)) << rep;
    }
}

TEST(Nnls, MatchesProjectedGradientOnWiderProblem) {
    std::mt19937_64 rng(78);
    const auto in = random_instance(rng, 120, 30);
    const Solution s = solve_nnls(in.X, in.y, 0.5);
    const Eigen::VectorXd pg = oracle::nnls_projected_gradient(in.X, in.y, 0.5, 200000);
    EXPECT_LT((s.gamma - pg).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Nnls, KktHoldsOnEveryReturn) {
    std::mt19937_64 rng(79);
    for (int rep = 0; rep < 200; ++rep) {
        const auto in = random_instance(rng, 15, 1 + rep % 10);
        const double lambda = rep % 2 ? 1e-3 : 0.0;
        const Solution s = solve_nnls(in.X, in.y, lambda);
        const KktResiduals k = kkt_residuals(in.X, in.y, lambda, s.gamma);
        EXPECT_LE(k.max(), 1e-8) << rep;
    }
}

TEST(Nnls, RidgeEqualsAugmentedPlainSolve) {
    std::mt19937_64 rng(80);
    const auto in = random_instance(rng, 25, 7);
    const double lambda = 0.3;
    const Solution ridge = solve_nnls(in.X, in.y, lambda);
    const auto [A, b] = ridge_augment(in.X, in.y, lambda);
    const Solution plain = solve_nnls(A, b, 0.0);
    EXPECT_LT((ridge.gamma - plain.gamma).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(ridge.objective, plain.objective, 1e-10);
}

TEST(Nnls, HandlesCollinearColumns) {
    std::mt19937_64 rng(81);
    auto in = random_instance(rng, 20, 4);
    in.X.col(3) = in.X.col(1); // duplicate column
    in.y = in.X.col(1) * 2.0 + in.X.col(0);
    const Solution s = solve_nnls(in.X, in.y, 0.0);
    EXPECT_LT(s.objective, 1e-18);
    EXPECT_LE(kkt_residuals(in.X, in.y, 0.0, s.gamma).max(), 1e-8);
    EXPECT_GE(s.gamma.minCoeff(), 0.0);
}

TEST(Nnls, DeterministicAcrossCalls) {
    std::mt19937_64 rng(82);
    const auto in = random_instance(rng, 30, 8);
    const Solution a = solve_nnls(in.X, in.y, 1e-4);
    const Solution b = solve_nnls(in.X, in.y, 1e-4);
    EXPECT_EQ(a.gamma, b.gamma);
    EXPECT_EQ(a.active_set, b.active_set);
}

TEST(Nnls, ScaleInvariantSupport) {
    std::mt19937_64 rng(83);
    const auto in = random_instance(rng, 30, 6);
    const Solution a = solve_nnls(in.X, in.y, 0.0);
    const Solution b = solve_nnls(in.X, 1e6 * in.y, 0.0);
    EXPECT_EQ(a.active_set, b.active_set);
    EXPECT_LT((1e6 * a.gamma - b.gamma).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Lse, RidgeMatchesClosedForm) {
    std::mt19937_64 rng(84);
    const auto in = random_instance(rng, 20, 5);
    const Solution s = solve_lse_ridge(in.X, in.y, 0.7);
    Eigen::MatrixXd G = in.X.transpose() * in.X + 0.7 * Eigen::MatrixXd::Identity(5, 5);
    const Eigen::VectorXd want = G.fullPivLu().solve(in.X.transpose() * in.y);
    EXPECT_LT((s.gamma - want).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(s.active_set.size(), 5u);
}

TEST(Lse, RankDeficientAtZeroLambda) {
    Eigen::MatrixXd X(3, 2);
    X << 1, 2, 2, 4, 3, 6;
    EXPECT_THROW(solve_lse_ridge(X, Eigen::Vector3d(1, 2, 3), 0.0), RankDeficiencyError);
    EXPECT_NO_THROW(solve_lse_ridge(X, Eigen::Vector3d(1, 2, 3), 1e-3));
}

TEST(SolverErrors, BadInputs) {
    const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_THROW(solve_nnls(X, Eigen::Vector3d(1, 2, 3), 0.0), ShapeError);
    EXPECT_THROW(solve_nnls(X, Eigen::Vector2d(1, 2), -1.0), ConfigError);
    Eigen::Vector2d y(1, std::numeric_limits<double>::quiet_NaN());
    EXPECT_THROW(solve_nnls(X, y, 0.0), Error);
    EXPECT_EQ(parse_solve_method("lse"), SolveMethod::LSE);
    EXPECT_THROW(parse_solve_method("lasso"), ConfigError);
}

TEST(Kkt, DetectsViolations) {
    const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::Vector2d y(3.0, -1.0);
    EXPECT_LE(kkt_residuals(X, y, 0.0, Eigen::Vector2d(3.0, 0.0)).max(), 0.0);
    EXPECT_GT(kkt_residuals(X, y, 0.0, Eigen::Vector2d(2.0, 0.0)).stationarity, 0.5);
    EXPECT_GT(kkt_residuals(X, y, 0.0, Eigen::Vector2d(3.0, -0.5)).primal_violation, 0.4);
    EXPECT_GT(kkt_residuals(X, Eigen::Vector2d(3.0, 1.0), 0.0, Eigen::Vector2d(3.0, 0.0)).dual_infeasibility, 0.5);
}
