// Cross-validates the default kernel grid on synthetic blobs, then refits the
// best configuration and scores a held-out draw.

#include <cstdio>

#include "toptune/toptune.hpp"

int main() {
  using namespace toptune;

  BlobSpec spec;
  spec.n = 600;
  spec.d = 64;
  spec.separation = 4.0;
  spec.seed = 1;
  const FeatureSet train = make_blobs(spec);
  spec.n = 300;
  spec.seed = 2;
  const FeatureSet test = make_blobs(spec);

  CvOptions opts;
  opts.seed = 7;
  const GridResult grid = run_grid_cv(train, GridSpec::default_kernel(), opts);
  for (const RunRecord& r : grid.records) {
    std::printf("%-26s  acc %.4f  %.3f s%s\n", r.config.label().c_str(), r.mean_accuracy,
                r.wall_time_s, r.ok() ? "" : "  (failed)");
  }
  std::printf("total %.3f s\n", grid.total_wall_time_s);

  const RunRecord& best = select_best(grid.records);
  const HoldoutResult h = evaluate_holdout(train, test, best.config, opts);
  std::printf("best %s: holdout acc %.4f\n", best.config.label().c_str(), h.accuracy);
}
