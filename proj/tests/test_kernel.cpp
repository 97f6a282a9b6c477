#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "toptune/kernel.hpp"

namespace toptune {
namespace {

using testing::random_matrix;

// Independent oracle: explicit differences, no norm expansion.
Matrix brute_force_kernel(const Matrix& x, const Matrix& z, double gamma) {
  Matrix out(x.rows(), z.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        const double diff = x(i, k) - z(j, k);
        s += diff * diff;
      }
      out(i, j) = std::exp(-s / (2.0 * gamma * gamma));
    }
  return out;
}

double max_relative_error(const Matrix& a, const Matrix& b) {
  return ((a - b).array().abs() / b.array().abs()).maxCoeff();
}

std::vector<double> row(const Matrix& m, Eigen::Index i) {
  return {m.row(i).data(), m.row(i).data() + m.cols()};
}

TEST(GaussianKernel, IdenticalPointsGiveOne) {
  const std::vector<double> z = {0.3, -1.0, 4.0};
  EXPECT_EQ(gaussian_kernel(z, z, KernelParams{2.0}), 1.0);
}

TEST(GaussianKernel, DistanceEqualToTwoGammaSquaredGivesInverseE) {
  // ||z - z2||^2 = 2 gamma^2 with gamma = 3: offset sqrt(18) along one axis.
  const std::vector<double> z = {1.0, 2.0};
  const std::vector<double> z2 = {1.0 + std::sqrt(18.0), 2.0};
  EXPECT_NEAR(gaussian_kernel(z, z2, KernelParams{3.0}), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(std::exp(-1.0), 0.367879, 1e-6);
}

TEST(GaussianKernel, PaperGridWidth) {
  // gamma = 1e2, offset (100 sqrt 2, 0, ...) -> ||.||^2 = 20000 = 2 * 100^2
  std::vector<double> z(5, 0.0);
  std::vector<double> z2(5, 0.0);
  z2[0] = 100.0 * std::sqrt(2.0);
  EXPECT_NEAR(gaussian_kernel(z, z2, KernelParams{100.0}), std::exp(-1.0), 1e-14);
}

TEST(GaussianKernel, SymmetricAndDimensionChecked) {
  const std::vector<double> a = {0.1, 0.2, 0.3};
  const std::vector<double> b = {-1.0, 2.0, 0.5};
  EXPECT_EQ(gaussian_kernel(a, b, KernelParams{1.5}), gaussian_kernel(b, a, KernelParams{1.5}));
  const std::vector<double> c = {1.0};
  EXPECT_THROW(gaussian_kernel(a, c, KernelParams{1.0}), ValidationError);
}

TEST(GaussianKernel, MonotoneInWidth) {
  const Matrix pts = random_matrix(20, 4, 8);
  for (Eigen::Index i = 1; i < pts.rows(); ++i) {
    const auto a = row(pts, 0);
    const auto b = row(pts, i);
    double previous = 0.0;
    for (double gamma : {0.5, 1.0, 2.0, 10.0, 100.0}) {
      const double value = gaussian_kernel(a, b, KernelParams{gamma});
      EXPECT_GT(value, previous);
      previous = value;
    }
  }
}

TEST(KernelParams, RejectsNonPositiveWidth) {
  EXPECT_THROW(KernelParams{0.0}.validate(), ValidationError);
  EXPECT_THROW(KernelParams{-1.0}.validate(), ValidationError);
  EXPECT_THROW(KernelParams{std::numeric_limits<double>::infinity()}.validate(), ValidationError);
}

TEST(KernelBlock, SelfBlockHasUnitDiagonal) {
  const Matrix x = random_matrix(3, 4, 1);
  const Matrix k = kernel_block(x, x, KernelParams{1.0});
  ASSERT_EQ(k.rows(), 3);
  ASSERT_EQ(k.cols(), 3);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(k(i, i), 1.0);
  EXPECT_EQ(k, k.transpose());
}

TEST(KernelBlock, MatchesBruteForce) {
  const Matrix x = random_matrix(7, 5, 2);
  const Matrix z = random_matrix(4, 5, 3);
  for (double gamma : {0.7, 1.0, 3.0, 100.0}) {
    const Matrix k = kernel_block(x, z, KernelParams{gamma});
    EXPECT_LT(max_relative_error(k, brute_force_kernel(x, z, gamma)), 1e-12) << gamma;
  }
}

TEST(KernelBlock, EmptyInputs) {
  const Matrix x(0, 5);
  const Matrix z = random_matrix(4, 5, 3);
  const Matrix k = kernel_block(x, z, KernelParams{1.0});
  EXPECT_EQ(k.rows(), 0);
  EXPECT_EQ(k.cols(), 4);
  EXPECT_EQ(kernel_block(z, x, KernelParams{1.0}).cols(), 0);
}

TEST(KernelBlock, DimensionMismatch) {
  EXPECT_THROW(kernel_block(random_matrix(2, 3, 1), random_matrix(2, 4, 1), KernelParams{1.0}),
               ValidationError);
}

TEST(KernelBlock, BlockSizesAgreeBitExactly) {
  const Matrix x = random_matrix(70, 9, 4);
  const Matrix z = random_matrix(33, 9, 5);
  const KernelParams p{2.0};
  const Matrix reference = brute_force_kernel(x, z, 2.0);
  const Matrix base = kernel_block(x, z, p, KernelOptions{64, 1});
  for (Eigen::Index bs : {Eigen::Index{1}, Eigen::Index{3}, Eigen::Index{64}, x.rows()}) {
    const Matrix k = kernel_block(x, z, p, KernelOptions{bs, 1});
    EXPECT_EQ(k, base) << "block size " << bs;
    EXPECT_LT(max_relative_error(k, reference), 1e-12);
  }
  const Matrix self_base = kernel_block(x, x, p, KernelOptions{64, 1});
  for (Eigen::Index bs : {Eigen::Index{1}, Eigen::Index{3}, x.rows()})
    EXPECT_EQ(kernel_block(x, x, p, KernelOptions{bs, 1}), self_base);
}

TEST(KernelBlock, ThreadedMatchesSerial) {
  const Matrix x = random_matrix(200, 6, 9);
  const Matrix z = random_matrix(90, 6, 10);
  const KernelParams p{1.3};
  EXPECT_EQ(kernel_block(x, z, p, KernelOptions{16, 4}), kernel_block(x, z, p, KernelOptions{16, 1}));
  EXPECT_EQ(kernel_block(x, x, p, KernelOptions{16, 3}), kernel_block(x, x, p, KernelOptions{16, 1}));
}

TEST(KernelBlock, RowsAreBatchInvariant) {
  const Matrix x = random_matrix(50, 7, 12);
  const Matrix z = random_matrix(20, 7, 13);
  const KernelParams p{1.0};
  const Matrix full = kernel_block(x, z, p);
  const Matrix part = kernel_block(Matrix(x.middleRows(17, 9)), z, p);
  EXPECT_EQ(part, Matrix(full.middleRows(17, 9)));
}

// Self-blocks are PSD up to rounding, checked with a dense eigensolver.
TEST(KernelBlock, SelfBlockIsPositiveSemidefinite) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + uniform_index(rng, 49));
    const auto d = static_cast<Eigen::Index>(1 + uniform_index(rng, 10));
    const Matrix x = random_matrix(n, d, 500 + trial);
    for (double gamma : {0.3, 1.0, 100.0, 1000.0}) {
      const Matrix k = kernel_block(x, x, KernelParams{gamma});
      const Eigen::MatrixXd dense = k;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense, Eigen::EigenvaluesOnly);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8 * static_cast<double>(n));
    }
  }
}

TEST(KernelBlock, CloseRowsNeverProduceNaN) {
  Matrix x = random_matrix(5, 3, 21, 1e4);
  Matrix z = x;
  z(2, 1) = std::nextafter(z(2, 1), 0.0);
  const Matrix k = kernel_block(x, z, KernelParams{1e-3});
  EXPECT_TRUE(k.allFinite());
  EXPECT_TRUE((k.array() <= 1.0).all());
}

}  // namespace
}  // namespace toptune
