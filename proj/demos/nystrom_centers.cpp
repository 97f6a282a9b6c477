// How far Nyström predictions sit from the dense solution as the number of
// centers grows.

#include <cstdio>

#include "toptune/toptune.hpp"

int main() {
  using namespace toptune;

  BlobSpec spec;
  spec.n = 400;
  spec.d = 16;
  spec.num_classes = 4;
  spec.separation = 3.0;
  spec.seed = 3;
  const FeatureSet fs = make_blobs(spec);
  const KernelParams kp{100.0};
  const double lambda = 1e-5;

  const ExactModel exact = fit_exact(fs, kp, lambda);
  const Matrix reference = predict_scores(exact, fs.promoted());

  std::printf("%6s  %12s  %6s  %s\n", "M", "max |diff|", "iters", "precond");
  for (std::size_t m : {8, 32, 100, 200, 400}) {
    SolverOptions opts;
    opts.num_centers = m;
    opts.seed = 11;
    const NystromModel ny = fit_nystrom(fs, kp, lambda, opts);
    const double diff = (predict_scores(ny, fs.promoted()) - reference).cwiseAbs().maxCoeff();
    std::printf("%6zu  %12.3e  %6zu  %s\n", m, diff, ny.log.max_iterations(),
                ny.log.preconditioner.c_str());
  }
}
