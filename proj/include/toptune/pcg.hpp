#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"

namespace toptune {

struct PcgResult {
  Vector solution;
  std::size_t iterations = 0;
  double relative_residual = 0.0;  // ||A x - b|| / ||b||, recomputed from x
  bool converged = false;
};

/// Preconditioned conjugate gradient for a symmetric positive definite operator.
///
/// `apply_operator(v)` returns A v and `apply_preconditioner(r)` returns an
/// approximation of A^{-1} r (itself SPD). Stops once the true relative
/// residual is at most `tol` or after `max_iter` iterations. When the
/// recurrence residual says "converged" but the recomputed one disagrees, the
/// residual is replaced and iteration resumes.
template <typename Operator, typename Preconditioner>
PcgResult pcg_solve(Operator&& apply_operator, const Vector& rhs,
                    Preconditioner&& apply_preconditioner, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw ValidationError("PCG tolerance must be positive");
  PcgResult result;
  result.solution = Vector::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (!std::isfinite(rhs_norm)) throw NumericError("PCG right-hand side is not finite");
  if (rhs_norm == 0.0) {
    result.converged = true;
    return result;
  }

  Vector& x = result.solution;
  Vector r = rhs;
  Vector z = apply_preconditioner(r);
  Vector p = z;
  double rz = r.dot(z);

  while (result.iterations < max_iter) {
    const Vector ap = apply_operator(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap)) {
      throw NumericError("PCG produced a non-finite iterate at iteration " +
                         std::to_string(result.iterations));
    }
    if (pap <= 0.0) break;  // operator not positive definite along p
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    ++result.iterations;
    if (!x.allFinite()) {
      throw NumericError("PCG produced a non-finite iterate at iteration " +
                         std::to_string(result.iterations));
    }

    if (r.norm() <= tol * rhs_norm) {
      r = rhs - apply_operator(x);
      if (r.norm() <= tol * rhs_norm) break;
      // drifted: restart the recurrence from the true residual
      z = apply_preconditioner(r);
      p = z;
      rz = r.dot(z);
      continue;
    }

    z = apply_preconditioner(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }

  result.relative_residual = (rhs - apply_operator(x)).norm() / rhs_norm;
  result.converged = result.relative_residual <= tol;
  return result;
}

/// Diagonal (Jacobi) preconditioner from the operator's diagonal.
struct JacobiPreconditioner {
  Vector inverse_diagonal;

  explicit JacobiPreconditioner(const Vector& diagonal)
      : inverse_diagonal(diagonal.cwiseInverse()) {}

  Vector operator()(const Vector& r) const { return r.cwiseProduct(inverse_diagonal); }
};

}  // namespace toptune
