#pragma once

#include <Eigen/Cholesky>

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"

namespace toptune {

/// Relative jitter levels tried, in order, after a failed factorization.
inline constexpr std::array<double, 3> kJitterSchedule = {1e-10, 1e-8, 1e-6};

struct JitteredCholesky {
  Eigen::MatrixXd factor;        // lower triangle holds L with A + jitter = L L^T
  double relative_jitter = 0.0;  // multiple of mean(diag) that was added

  auto lower() const { return factor.triangularView<Eigen::Lower>(); }

  Eigen::MatrixXd lower_dense() const { return lower(); }

  /// Solves (A + jitter) X = B.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd x = lower().solve(b);
    factor.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }
};

namespace detail {

// Factorization finished and no pivot collapsed to rounding level.
inline bool factor_is_sound(const Eigen::MatrixXd& factor, double mean_diag) {
  const auto diag = factor.diagonal();
  if (!diag.allFinite()) return false;
  const double floor = static_cast<double>(diag.size()) * std::numeric_limits<double>::epsilon() *
                       mean_diag;
  return diag.array().square().minCoeff() > floor;
}

}  // namespace detail

/// Cholesky factorization of a symmetric positive semidefinite matrix.
///
/// Tries `base_jitter * mean(diag)` on the diagonal first, then each level of
/// kJitterSchedule above it. A factor whose smallest squared pivot is below
/// n * eps * mean(diag) counts as a failure. Throws NumericError when every
/// level fails.
inline JitteredCholesky cholesky_with_jitter(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                             double base_jitter = 0.0,
                                             const std::string& what = "matrix") {
  const Eigen::Index n = a.rows();
  const double mean_diag = n > 0 ? a.diagonal().mean() : 1.0;
  if (!std::isfinite(mean_diag)) throw NumericError(what + " has a non-finite diagonal");

  JitteredCholesky out;
  auto attempt = [&](double rel) {
    out.factor = a;
    out.factor.diagonal().array() += rel * mean_diag;
    out.relative_jitter = rel;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(out.factor);
    return llt.info() == Eigen::Success && detail::factor_is_sound(out.factor, mean_diag);
  };

  if (n == 0 || attempt(base_jitter)) return out;
  for (double level : kJitterSchedule) {
    if (level <= base_jitter) continue;
    if (attempt(level)) return out;
  }
  throw NumericError("Cholesky factorization of " + what + " (" + std::to_string(n) + "x" +
                     std::to_string(n) + ") failed after jitter escalation up to " +
                     std::to_string(kJitterSchedule.back()) + " * mean(diag)");
}

}  // namespace toptune
