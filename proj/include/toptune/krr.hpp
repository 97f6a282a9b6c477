#pragma once

// Ridge classifiers on fixed features.
//
// Three trainers share the one-hot target encoding and the argmax decision:
//
//  * fit_exact    dense kernel ridge, (K + lambda n I) A = Y. Small-n oracle.
//  * fit_nystrom  kernel ridge restricted to M sampled centers, solved by PCG
//                 on the averaged normal equations
//                   (K_nm^T K_nm / n + lambda K_mm) beta = K_nm^T Y / n.
//  * fit_linear_ridge  (X^T X + alpha I) W = X^T Y.
//
// With M = n and all rows as centers, fit_nystrom and fit_exact describe the
// same estimator. They agree to roughly 1e-6 in scores. When K is numerically
// rank-deficient the normal equations square its conditioning, and float64
// cannot do much better than that.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "toptune/cholesky.hpp"
#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"
#include "toptune/kernel.hpp"
#include "toptune/pcg.hpp"
#include "toptune/random.hpp"

namespace toptune {

/// min(n, 10 * ceil(5 sqrt(n)), 5000).
inline std::size_t default_num_centers(std::size_t n) {
  const auto scaled = static_cast<std::size_t>(std::ceil(5.0 * std::sqrt(static_cast<double>(n)))) * 10;
  return std::min({n, scaled, std::size_t{5000}});
}

/// Below this many centers the Nyström system is preconditioned with its diagonal.
inline constexpr std::size_t kMinCentersForCholeskyPreconditioner = 32;

struct SolverOptions {
  std::size_t num_centers = 0;  // 0 selects default_num_centers(n)
  std::size_t max_iter = 100;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  double jitter = 0.0;  // initial diagonal stabilizer, relative to mean(diag)
  KernelOptions kernel;

  void validate() const {
    if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
    if (!(tol > 0.0 && tol < 1.0)) {
      throw ValidationError("tol must lie in (0, 1) (got " + std::to_string(tol) + ")");
    }
    if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ValidationError("jitter must be >= 0");
  }
};

struct ExactOptions {
  std::size_t max_samples = 4096;  // oracle cap
  double jitter = 0.0;
  KernelOptions kernel;
};

struct TrainingLog {
  std::string preconditioner;               // "cholesky", "jacobi" or "direct"
  double relative_jitter = 0.0;             // added to K_mm (or K) before factorizing
  std::vector<std::size_t> iterations;      // per class
  std::vector<double> relative_residuals;   // per class; for the Cholesky path, of the preconditioned system
  bool converged = true;
  double fit_seconds = 0.0;

  std::size_t max_iterations() const {
    return iterations.empty() ? 0 : *std::max_element(iterations.begin(), iterations.end());
  }
  double max_residual() const {
    return relative_residuals.empty()
               ? 0.0
               : *std::max_element(relative_residuals.begin(), relative_residuals.end());
  }
};

struct NystromModel {
  Matrix centers;       // M x d
  Matrix coefficients;  // M x C
  KernelParams params;
  double lambda = 0.0;
  std::vector<std::size_t> center_indices;  // rows of the training set
  TrainingLog log;
};

struct ExactModel {
  Matrix support;       // n x d
  Matrix coefficients;  // n x C
  KernelParams params;
  double lambda = 0.0;
  TrainingLog log;
};

struct LinearModel {
  Matrix weights;  // d x C
  double alpha = 0.0;
  TrainingLog log;
};

using Model = std::variant<NystromModel, ExactModel, LinearModel>;

namespace detail {

inline void check_lambda(double lambda, const char* name = "lambda") {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ValidationError(std::string(name) + " must be positive and finite (got " +
                          std::to_string(lambda) + ")");
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline double relative_frobenius_residual(const Eigen::MatrixXd& lhs_times_sol,
                                          const Eigen::MatrixXd& rhs) {
  const double denom = rhs.norm();
  return denom == 0.0 ? lhs_times_sol.norm() : (lhs_times_sol - rhs).norm() / denom;
}

// scores(i, c) = sum_j k(i, j) coef(j, c), accumulated over j in order.
inline void accumulate_scores(const Matrix& k, const Matrix& coef, Eigen::Index out_row0,
                              Matrix& scores) {
  const Eigen::Index cols = coef.cols();
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    double* out = scores.row(out_row0 + i).data();
    std::fill(out, out + cols, 0.0);
    const double* krow = k.row(i).data();
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      const double kij = krow[j];
      const double* crow = coef.row(j).data();
      for (Eigen::Index c = 0; c < cols; ++c) out[c] += kij * crow[c];
    }
  }
}

inline Matrix kernel_scores(const Matrix& queries, const Matrix& centers, const Matrix& coef,
                            const KernelParams& params, const KernelOptions& kopts) {
  if (queries.cols() != centers.cols()) {
    throw ValidationError("feature dimension mismatch: model expects d=" +
                          std::to_string(centers.cols()) + ", got d=" +
                          std::to_string(queries.cols()));
  }
  constexpr Eigen::Index kBatch = 256;
  Matrix scores(queries.rows(), coef.cols());
  for (Eigen::Index r0 = 0; r0 < queries.rows(); r0 += kBatch) {
    const Eigen::Index rows = std::min(kBatch, queries.rows() - r0);
    const Matrix batch = queries.middleRows(r0, rows);
    const Matrix k = kernel_block(batch, centers, params, kopts);
    accumulate_scores(k, coef, r0, scores);
  }
  return scores;
}

}  // namespace detail

/// Dense kernel ridge regression: solves (K + lambda n I) A = Y.
inline ExactModel fit_exact(const FeatureSet& fs, const KernelParams& p, double lambda,
                            const ExactOptions& opts = {}) {
  fs.validate();
  p.validate();
  detail::check_lambda(lambda);
  const std::size_t n = fs.size();
  if (n > opts.max_samples) {
    throw ValidationError("fit_exact is capped at " + std::to_string(opts.max_samples) +
                          " samples (got " + std::to_string(n) + ")");
  }
  const auto start = std::chrono::steady_clock::now();

  ExactModel model;
  model.params = p;
  model.lambda = lambda;
  model.support = fs.promoted();
  const Eigen::MatrixXd targets = encode_targets(fs.labels, fs.num_classes);

  // K is symmetric, so its row-major storage doubles as column-major.
  Matrix gram = kernel_block(model.support, model.support, p, opts.kernel);
  Eigen::Map<Eigen::MatrixXd> system(gram.data(), gram.rows(), gram.cols());
  system.diagonal().array() += lambda * static_cast<double>(n);
  const JitteredCholesky chol = cholesky_with_jitter(system, opts.jitter, "K + lambda n I");
  Eigen::MatrixXd coef = chol.solve(targets);
  if (!coef.allFinite()) throw NumericError("fit_exact produced non-finite coefficients");

  model.coefficients = coef;
  model.log.preconditioner = "direct";
  model.log.relative_jitter = chol.relative_jitter;
  const double residual = detail::relative_frobenius_residual(system * coef, targets);
  model.log.iterations.assign(fs.num_classes, 1);
  model.log.relative_residuals.assign(fs.num_classes, residual);
  model.log.converged = residual <= 1e-8;
  model.log.fit_seconds = detail::seconds_since(start);
  return model;
}

struct CenterSample {
  Matrix centers;                    // M x d
  std::vector<std::size_t> indices;  // ascending row indices
};

/// M distinct rows drawn uniformly without replacement, deterministic in `seed`.
inline CenterSample sample_centers(const FeatureSet& fs, std::size_t m, std::uint64_t seed) {
  if (m < 1 || m > fs.size()) {
    throw ValidationError("number of centers must lie in [1, n=" + std::to_string(fs.size()) +
                          "] (got " + std::to_string(m) + ")");
  }
  Rng rng(seed);
  CenterSample out;
  out.indices = sample_without_replacement(fs.size(), m, rng);
  std::sort(out.indices.begin(), out.indices.end());
  out.centers.resize(static_cast<Eigen::Index>(m), fs.features.cols());
  for (std::size_t i = 0; i < m; ++i)
    out.centers.row(static_cast<Eigen::Index>(i)) =
        fs.features.row(static_cast<Eigen::Index>(out.indices[i])).cast<double>();
  return out;
}

/// Nyström kernel ridge regression on promoted features `x` with one-hot
/// `targets`, using the given training rows as centers.
inline NystromModel fit_nystrom_with_centers(const Matrix& x, const Matrix& targets,
                                             const std::vector<std::size_t>& center_indices,
                                             const KernelParams& p, double lambda,
                                             const SolverOptions& opts) {
  p.validate();
  detail::check_lambda(lambda);
  opts.validate();
  const Eigen::Index n = x.rows();
  const auto m = static_cast<Eigen::Index>(center_indices.size());
  if (m < 1 || m > n) {
    throw ValidationError("number of centers must lie in [1, n=" + std::to_string(n) + "]");
  }
  if (targets.rows() != n) throw ValidationError("target rows do not match feature rows");
  for (std::size_t idx : center_indices) {
    if (idx >= static_cast<std::size_t>(n)) throw ValidationError("center index out of range");
  }
  const auto start = std::chrono::steady_clock::now();

  NystromModel model;
  model.params = p;
  model.lambda = lambda;
  model.center_indices = center_indices;
  model.centers = detail::gather_rows(x, center_indices);

  Matrix knm = kernel_block(x, model.centers, p, opts.kernel);
  const Eigen::MatrixXd kmm = kernel_block(model.centers, model.centers, p, opts.kernel);
  if (!knm.allFinite()) throw NumericError("kernel block K_nm contains non-finite values");

  const double inv_n = 1.0 / static_cast<double>(n);
  model.coefficients.resize(m, targets.cols());
  auto record = [&](const PcgResult& solved) {
    model.log.iterations.push_back(solved.iterations);
    model.log.relative_residuals.push_back(solved.relative_residual);
    model.log.converged = model.log.converged && solved.converged;
  };

  if (static_cast<std::size_t>(m) >= kMinCentersForCholeskyPreconditioner) {
    // K_mm + eps I = T^T T, T T^T / M + lambda I = A^T A. CG runs on
    //   W = A^{-T} T^{-T} H T^{-1} A^{-1},  beta = T^{-1} A^{-1} w.
    // B = K_nm T^{-1} is formed once so T^{-1} is not re-applied to rounded
    // iterates; the eps shift is subtracted back out of the lambda K_mm term.
    const JitteredCholesky kmm_chol = cholesky_with_jitter(kmm, opts.jitter, "K_mm");
    model.log.relative_jitter = kmm_chol.relative_jitter;
    const Eigen::MatrixXd t_lower = kmm_chol.lower_dense();  // T = L^T
    Eigen::MatrixXd inner = t_lower.transpose() * t_lower;
    inner /= static_cast<double>(m);
    inner.diagonal().array() += lambda;
    const Eigen::MatrixXd a_lower =
        cholesky_with_jitter(inner, 0.0, "T T^T / M + lambda I").lower_dense();
    model.log.preconditioner = "cholesky";

    const auto t_upper = t_lower.transpose().triangularView<Eigen::Upper>();
    const auto a_upper = a_lower.transpose().triangularView<Eigen::Upper>();
    const double eps = kmm_chol.relative_jitter * kmm.diagonal().mean();
    t_upper.solveInPlace<Eigen::OnTheRight>(knm);
    const Matrix& b_mat = knm;

    auto apply_w = [&](const Vector& v) -> Vector {
      const Vector u = a_upper.solve(v);
      Vector out = (b_mat.transpose() * (b_mat * u)) * inv_n;
      out.noalias() += lambda * u;
      if (eps > 0.0) {
        Vector tu = t_upper.solve(u);
        t_lower.triangularView<Eigen::Lower>().solveInPlace(tu);
        out.noalias() -= (lambda * eps) * tu;
      }
      a_lower.triangularView<Eigen::Lower>().solveInPlace(out);
      return out;
    };
    auto identity = [](const Vector& r) { return r; };

    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
      Vector rhs = (b_mat.transpose() * targets.col(c)) * inv_n;
      a_lower.triangularView<Eigen::Lower>().solveInPlace(rhs);
      const PcgResult solved = pcg_solve(apply_w, rhs, identity, opts.tol, opts.max_iter);
      Vector beta = a_upper.solve(solved.solution);
      t_upper.solveInPlace(beta);
      model.coefficients.col(c) = beta;
      record(solved);
    }
  } else {
    auto apply_h = [&](const Vector& v) -> Vector {
      const Vector t = knm * v;
      Vector out = (knm.transpose() * t) * inv_n;
      out.noalias() += lambda * (kmm * v);
      return out;
    };
    Vector jacobi_diag = knm.colwise().squaredNorm().transpose() * inv_n;
    jacobi_diag += lambda * kmm.diagonal();
    model.log.preconditioner = "jacobi";
    auto apply_precond = [&](const Vector& r) -> Vector { return r.cwiseQuotient(jacobi_diag); };

    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
      const Vector rhs = (knm.transpose() * targets.col(c)) * inv_n;
      const PcgResult solved = pcg_solve(apply_h, rhs, apply_precond, opts.tol, opts.max_iter);
      model.coefficients.col(c) = solved.solution;
      record(solved);
    }
  }
  if (!model.coefficients.allFinite()) {
    throw NumericError("Nyström solve produced non-finite coefficients (M=" + std::to_string(m) +
                       ", gamma=" + std::to_string(p.gamma) + ", lambda=" + std::to_string(lambda) +
                       ")");
  }
  model.log.fit_seconds = detail::seconds_since(start);
  return model;
}

/// Nyström kernel ridge regression with uniformly sampled centers.
inline NystromModel fit_nystrom(const FeatureSet& fs, const KernelParams& p, double lambda,
                                const SolverOptions& opts = {}) {
  fs.validate();
  p.validate();
  detail::check_lambda(lambda);
  opts.validate();
  const std::size_t m = opts.num_centers == 0 ? default_num_centers(fs.size()) : opts.num_centers;
  const CenterSample sample = sample_centers(fs, m, opts.seed);
  return fit_nystrom_with_centers(fs.promoted(), encode_targets(fs.labels, fs.num_classes),
                                  sample.indices, p, lambda, opts);
}

/// Linear ridge classifier on promoted features `x` with one-hot `targets`:
/// solves (X^T X + alpha I) W = X^T Y.
inline LinearModel fit_linear_ridge(const Matrix& x, const Matrix& targets, double alpha) {
  detail::check_lambda(alpha, "alpha");
  if (targets.rows() != x.rows()) throw ValidationError("target rows do not match feature rows");
  const auto start = std::chrono::steady_clock::now();

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += alpha;
  const Eigen::MatrixXd xty = x.transpose() * targets;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw NumericError("Cholesky factorization of X^T X + alpha I failed (alpha=" +
                       std::to_string(alpha) + ")");
  }
  Eigen::MatrixXd w = llt.solve(xty);
  if (!w.allFinite()) throw NumericError("linear ridge produced non-finite weights");

  LinearModel model;
  model.alpha = alpha;
  model.weights = w;
  model.log.preconditioner = "direct";
  const double residual = detail::relative_frobenius_residual(gram * w, xty);
  model.log.iterations.assign(static_cast<std::size_t>(targets.cols()), 1);
  model.log.relative_residuals.assign(static_cast<std::size_t>(targets.cols()), residual);
  model.log.converged = residual <= 1e-8;
  model.log.fit_seconds = detail::seconds_since(start);
  return model;
}

inline LinearModel fit_linear_ridge(const FeatureSet& fs, double alpha) {
  fs.validate();
  detail::check_lambda(alpha, "alpha");
  return fit_linear_ridge(fs.promoted(), encode_targets(fs.labels, fs.num_classes), alpha);
}

inline Matrix predict_scores(const NystromModel& model, const Matrix& x,
                             const KernelOptions& kopts = {}) {
  return detail::kernel_scores(x, model.centers, model.coefficients, model.params, kopts);
}

inline Matrix predict_scores(const ExactModel& model, const Matrix& x,
                             const KernelOptions& kopts = {}) {
  return detail::kernel_scores(x, model.support, model.coefficients, model.params, kopts);
}

inline Matrix predict_scores(const LinearModel& model, const Matrix& x) {
  if (x.cols() != model.weights.rows()) {
    throw ValidationError("feature dimension mismatch: model expects d=" +
                          std::to_string(model.weights.rows()) + ", got d=" +
                          std::to_string(x.cols()));
  }
  Matrix scores(x.rows(), model.weights.cols());
  detail::accumulate_scores(x, model.weights, 0, scores);
  return scores;
}

inline Matrix predict_scores(const Model& model, const Matrix& x) {
  return std::visit([&](const auto& m) { return predict_scores(m, x); }, model);
}

/// Row-wise argmax; ties go to the smallest class index.
inline std::vector<Label> predict_labels(const Matrix& scores) {
  std::vector<Label> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
  }
  return out;
}

inline double accuracy(const std::vector<Label>& predicted, const std::vector<Label>& truth) {
  if (predicted.size() != truth.size()) throw ValidationError("prediction/label count mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace toptune
