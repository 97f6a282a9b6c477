#pragma once

// Hyperparameter grids evaluated by stratified k-fold cross validation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <new>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"
#include "toptune/krr.hpp"
#include "toptune/random.hpp"

namespace toptune {

enum class GridKind { kernel, linear };

inline const char* to_string(GridKind kind) { return kind == GridKind::kernel ? "kernel" : "linear"; }

/// One grid point. Kernel configs use gamma and lambda, linear ones use alpha.
struct GridConfig {
  GridKind kind = GridKind::kernel;
  double gamma = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;

  std::string label() const {
    char buf[96];
    if (kind == GridKind::kernel) {
      std::snprintf(buf, sizeof buf, "gamma=%g lambda=%g", gamma, lambda);
    } else {
      std::snprintf(buf, sizeof buf, "alpha=%g", alpha);
    }
    return buf;
  }

  bool operator==(const GridConfig&) const = default;
};

struct GridSpec {
  GridKind kind = GridKind::kernel;
  std::vector<double> gammas;
  std::vector<double> lambdas;
  std::vector<double> alphas;

  /// gamma in {1e2, 1e3} x lambda in {1e-5, 1e-6}.
  static GridSpec default_kernel() { return {GridKind::kernel, {1e2, 1e3}, {1e-5, 1e-6}, {}}; }

  /// alpha in {10, 0.1, 1e-3}.
  static GridSpec default_linear() { return {GridKind::linear, {}, {}, {10.0, 0.1, 1e-3}}; }

  void validate() const {
    auto check = [](const std::vector<double>& values, const char* name) {
      if (values.empty()) throw ValidationError(std::string("grid needs at least one ") + name);
      for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
          throw ValidationError(std::string("grid ") + name + " must be positive and finite (got " +
                                std::to_string(v) + ")");
        }
      }
    };
    if (kind == GridKind::kernel) {
      check(gammas, "gamma");
      check(lambdas, "lambda");
    } else {
      check(alphas, "alpha");
    }
  }

  /// Grid points in order: gammas outer, lambdas inner (or alphas as listed).
  std::vector<GridConfig> configs() const {
    validate();
    std::vector<GridConfig> out;
    if (kind == GridKind::kernel) {
      for (double g : gammas)
        for (double l : lambdas) out.push_back({GridKind::kernel, g, l, 0.0});
    } else {
      for (double a : alphas) out.push_back({GridKind::linear, 0.0, 0.0, a});
    }
    return out;
  }
};

struct RunRecord {
  GridConfig config;
  std::vector<double> fold_accuracies;  // in [0, 1], one per fold
  double mean_accuracy = 0.0;
  double wall_time_s = 0.0;             // fit + predict summed over folds
  std::optional<std::string> error;     // set when a fold failed; the record is then unusable
  bool converged = true;                // every solve in every fold reached tol
  std::size_t max_iterations = 0;
  double max_residual = 0.0;

  bool ok() const { return !error.has_value(); }
};

struct CvOptions {
  std::uint32_t folds = 5;
  std::uint64_t seed = 0;      // fold assignment; center sampling uses solver.seed
  SolverOptions solver;
  bool standardize = false;    // z-score features inside each fold (fitted on the train part)
  unsigned parallel = 1;       // grid points evaluated concurrently
};

struct GridResult {
  std::vector<RunRecord> records;  // grid order
  double total_wall_time_s = 0.0;  // sum of records[i].wall_time_s
  SplitPlan plan;
};

namespace detail {

struct FoldData {
  Matrix train_x;
  Matrix train_y;  // one-hot
  Matrix test_x;
  std::vector<Label> test_labels;
};

inline std::vector<FoldData> prepare_folds(const FeatureSet& fs, const SplitPlan& plan,
                                           bool standardize) {
  const Matrix x = fs.promoted();
  std::vector<FoldData> folds(plan.k);
  for (std::uint32_t f = 0; f < plan.k; ++f) {
    const auto train = plan.train_indices(f);
    const auto test = plan.test_indices(f);
    FoldData& fd = folds[f];
    fd.train_x = gather_rows(x, train);
    fd.test_x = gather_rows(x, test);
    std::vector<Label> train_labels;
    for (std::size_t i : train) train_labels.push_back(fs.labels[i]);
    for (std::size_t i : test) fd.test_labels.push_back(fs.labels[i]);
    fd.train_y = encode_targets(train_labels, fs.num_classes);
    if (standardize) {
      const Standardizer s = Standardizer::fit(fd.train_x);
      fd.train_x = s.apply(fd.train_x);
      fd.test_x = s.apply(fd.test_x);
    }
  }
  return folds;
}

// Centers for a fold depend on the solver seed and the fold, never on the config.
inline std::vector<std::size_t> fold_centers(std::size_t n_train, const SolverOptions& opts,
                                             std::uint32_t fold) {
  const std::size_t m = opts.num_centers == 0 ? default_num_centers(n_train)
                                              : std::min(opts.num_centers, n_train);
  Rng rng(opts.seed + 0x9E3779B97F4A7C15ull * (fold + 1));
  auto idx = sample_without_replacement(n_train, m, rng);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct FitOutcome {
  std::vector<Label> predicted;
  TrainingLog log;
};

inline FitOutcome fit_and_predict(const GridConfig& cfg, const Matrix& train_x,
                                  const Matrix& train_y, const Matrix& test_x,
                                  const std::vector<std::size_t>& centers,
                                  const SolverOptions& opts) {
  FitOutcome out;
  if (cfg.kind == GridKind::kernel) {
    const NystromModel model = fit_nystrom_with_centers(train_x, train_y, centers,
                                                        KernelParams{cfg.gamma}, cfg.lambda, opts);
    out.predicted = predict_labels(predict_scores(model, test_x, opts.kernel));
    out.log = model.log;
  } else {
    const LinearModel model = fit_linear_ridge(train_x, train_y, cfg.alpha);
    out.predicted = predict_labels(predict_scores(model, test_x));
    out.log = model.log;
  }
  return out;
}

inline RunRecord run_config(const GridConfig& cfg, const std::vector<FoldData>& folds,
                            const std::vector<std::vector<std::size_t>>& centers,
                            const SolverOptions& opts) {
  RunRecord rec;
  rec.config = cfg;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const FoldData& fd = folds[f];
    const auto start = std::chrono::steady_clock::now();
    try {
      const FitOutcome outcome =
          fit_and_predict(cfg, fd.train_x, fd.train_y, fd.test_x, centers[f], opts);
      rec.wall_time_s += seconds_since(start);
      rec.fold_accuracies.push_back(accuracy(outcome.predicted, fd.test_labels));
      rec.converged = rec.converged && outcome.log.converged;
      rec.max_iterations = std::max(rec.max_iterations, outcome.log.max_iterations());
      rec.max_residual = std::max(rec.max_residual, outcome.log.max_residual());
    } catch (const Error& e) {
      rec.wall_time_s += seconds_since(start);
      rec.error = cfg.label() + ", fold " + std::to_string(f) + ": " + e.what();
      break;
    } catch (const std::bad_alloc&) {
      rec.wall_time_s += seconds_since(start);
      rec.error = cfg.label() + ", fold " + std::to_string(f) + ": out of memory";
      break;
    }
  }
  if (rec.ok()) {
    double sum = 0.0;
    for (double a : rec.fold_accuracies) sum += a;
    rec.mean_accuracy = sum / static_cast<double>(rec.fold_accuracies.size());
  } else {
    rec.fold_accuracies.clear();
    rec.mean_accuracy = 0.0;
  }
  return rec;
}

}  // namespace detail

/// Evaluates every grid point on the same stratified k-fold split.
///
/// A config whose solver throws gets a RunRecord with `error` set; the other
/// configs still run. Wall time covers fitting and predicting only.
inline GridResult run_grid_cv(const FeatureSet& fs, const GridSpec& grid, const CvOptions& opts) {
  fs.validate();
  const std::vector<GridConfig> configs = grid.configs();
  if (grid.kind == GridKind::kernel) opts.solver.validate();

  GridResult result;
  result.plan = stratified_kfold(fs.labels, opts.folds, opts.seed);
  const auto folds = detail::prepare_folds(fs, result.plan, opts.standardize);
  std::vector<std::vector<std::size_t>> centers(folds.size());
  if (grid.kind == GridKind::kernel) {
    for (std::uint32_t f = 0; f < folds.size(); ++f) {
      centers[f] = detail::fold_centers(static_cast<std::size_t>(folds[f].train_x.rows()),
                                        opts.solver, f);
    }
  }

  result.records.resize(configs.size());
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, opts.parallel), configs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i)
      result.records[i] = detail::run_config(configs[i], folds, centers, opts.solver);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < configs.size(); i = next++)
        result.records[i] = detail::run_config(configs[i], folds, centers, opts.solver);
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  }

  for (const RunRecord& r : result.records) result.total_wall_time_s += r.wall_time_s;
  return result;
}

/// Index of the record with the highest mean accuracy. Ties go to the earlier
/// record; failed records are skipped.
inline std::size_t select_best_index(const std::vector<RunRecord>& records) {
  if (records.empty()) throw ValidationError("select_best needs at least one record");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].ok()) continue;
    if (!best || records[i].mean_accuracy > records[*best].mean_accuracy) best = i;
  }
  if (!best) throw NumericError("every grid configuration failed");
  return *best;
}

inline const RunRecord& select_best(const std::vector<RunRecord>& records) {
  return records[select_best_index(records)];
}

struct HoldoutResult {
  GridConfig config;
  double accuracy = 0.0;
  double wall_time_s = 0.0;
  TrainingLog log;
};

/// Fits one config on all of `train` and scores it on `test`.
inline HoldoutResult evaluate_holdout(const FeatureSet& train, const FeatureSet& test,
                                      const GridConfig& cfg, const CvOptions& opts) {
  train.validate();
  test.validate();
  if (train.dim() != test.dim()) {
    throw ValidationError("train/test dimension mismatch: " + std::to_string(train.dim()) + " vs " +
                          std::to_string(test.dim()));
  }
  if (test.num_classes > train.num_classes) {
    throw ValidationError("test set has more classes than the training set");
  }
  Matrix train_x = train.promoted();
  Matrix test_x = test.promoted();
  if (opts.standardize) {
    const Standardizer s = Standardizer::fit(train_x);
    train_x = s.apply(train_x);
    test_x = s.apply(test_x);
  }
  const Matrix train_y = encode_targets(train.labels, train.num_classes);
  std::vector<std::size_t> centers;
  if (cfg.kind == GridKind::kernel) {
    const std::size_t m = opts.solver.num_centers == 0 ? default_num_centers(train.size())
                                                       : opts.solver.num_centers;
    Rng rng(opts.solver.seed);
    centers = sample_without_replacement(train.size(), std::min(m, train.size()), rng);
    std::sort(centers.begin(), centers.end());
  }
  HoldoutResult out;
  out.config = cfg;
  const auto start = std::chrono::steady_clock::now();
  const auto outcome = detail::fit_and_predict(cfg, train_x, train_y, test_x, centers, opts.solver);
  out.wall_time_s = detail::seconds_since(start);
  out.accuracy = accuracy(outcome.predicted, test.labels);
  out.log = outcome.log;
  return out;
}

}  // namespace toptune
