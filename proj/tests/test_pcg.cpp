#include <gtest/gtest.h>

#include <Eigen/LU>

#include "test_util.hpp"
#include "toptune/pcg.hpp"

namespace toptune {
namespace {

auto identity_preconditioner = [](const Vector& r) { return r; };

TEST(Pcg, IdentityConvergesInOneIteration) {
  const Vector b = (Vector(4) << 1.0, -2.0, 0.5, 3.0).finished();
  const PcgResult res = pcg_solve([](const Vector& v) { return v; }, b, identity_preconditioner,
                                  1e-8, 100);
  EXPECT_EQ(res.iterations, 1u);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.solution, b);
}

TEST(Pcg, DiagonalSystemClosedForm) {
  const Vector diag = Vector::LinSpaced(5, 1.0, 5.0);
  const Vector b = Vector::Ones(5);
  const PcgResult res = pcg_solve([&](const Vector& v) -> Vector { return diag.cwiseProduct(v); },
                                  b, identity_preconditioner, 1e-10, 100);
  ASSERT_TRUE(res.converged);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(res.solution(i), 1.0 / (i + 1), 1e-9);
  EXPECT_LE(res.iterations, 5u);
}

TEST(Pcg, JacobiOnDiagonalIsExact) {
  const Vector diag = Vector::LinSpaced(5, 1.0, 5.0);
  const PcgResult res = pcg_solve([&](const Vector& v) -> Vector { return diag.cwiseProduct(v); },
                                  Vector::Ones(5), JacobiPreconditioner(diag), 1e-12, 100);
  EXPECT_EQ(res.iterations, 1u);
  EXPECT_TRUE(res.converged);
}

TEST(Pcg, ZeroRightHandSide) {
  const PcgResult res = pcg_solve([](const Vector& v) { return v; }, Vector::Zero(3),
                                  identity_preconditioner, 1e-8, 10);
  EXPECT_EQ(res.iterations, 0u);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.solution, Vector::Zero(3));
}

TEST(Pcg, RandomSpdMatchesDenseSolve) {
  const Eigen::Index n = 50;
  const Eigen::MatrixXd g = testing::random_matrix(n, n, 31);
  const Eigen::MatrixXd a = g.transpose() * g + Eigen::MatrixXd::Identity(n, n);
  const Vector b = testing::random_matrix(n, 1, 32).col(0);
  const PcgResult res = pcg_solve([&](const Vector& v) -> Vector { return a * v; }, b,
                                  identity_preconditioner, 1e-10, 500);
  ASSERT_TRUE(res.converged);
  const Vector direct = a.partialPivLu().solve(b);
  EXPECT_LT((res.solution - direct).norm() / direct.norm(), 1e-6);
}

TEST(Pcg, ReportsNonConvergenceAtIterationCap) {
  const Eigen::Index n = 40;
  const Eigen::MatrixXd g = testing::random_matrix(n, n, 41);
  const Eigen::MatrixXd a = g.transpose() * g + 1e-3 * Eigen::MatrixXd::Identity(n, n);
  const PcgResult res = pcg_solve([&](const Vector& v) -> Vector { return a * v; },
                                  Vector::Ones(n), identity_preconditioner, 1e-12, 3);
  EXPECT_EQ(res.iterations, 3u);
  EXPECT_FALSE(res.converged);
  EXPECT_GT(res.relative_residual, 1e-12);
  EXPECT_NEAR(res.relative_residual, (a * res.solution - Vector::Ones(n)).norm() / std::sqrt(40.0),
              1e-12);
}

TEST(Pcg, NonFiniteIterateThrows) {
  const Vector nan_diag = Vector::Constant(3, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(pcg_solve([&](const Vector& v) -> Vector { return nan_diag.cwiseProduct(v); },
                         Vector::Ones(3), identity_preconditioner, 1e-8, 10),
               NumericError);
}

// Jacobi-preconditioned PCG agrees with a dense LU solve on random SPD systems.
TEST(Pcg, JacobiRandomSpdProperty) {
  Rng rng(5150);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + uniform_index(rng, 100));
    const Eigen::MatrixXd g = testing::random_matrix(n, n, 7000 + trial);
    Eigen::MatrixXd a = g.transpose() * g + Eigen::MatrixXd::Identity(n, n);
    // uneven diagonal scaling so the preconditioner has work to do
    const Vector s = (testing::random_matrix(n, 1, 9000 + trial).col(0).array().abs() + 0.1).matrix();
    a = s.asDiagonal() * a * s.asDiagonal();
    const Vector b = testing::random_matrix(n, 1, 8000 + trial).col(0);
    const PcgResult res = pcg_solve([&](const Vector& v) -> Vector { return a * v; }, b,
                                    JacobiPreconditioner(a.diagonal()), 1e-8, 10 * n + 100);
    ASSERT_TRUE(res.converged) << "trial " << trial;
    const Vector direct = a.partialPivLu().solve(b);
    ASSERT_LT((res.solution - direct).norm() / direct.norm(), 1e-6) << "trial " << trial;
  }
}

}  // namespace
}  // namespace toptune
