#pragma once

// Seeded synthetic feature sets for tests, demos and the CLI.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"
#include "toptune/random.hpp"

namespace toptune {

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller (portable, unlike std::normal_distribution).
inline double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

struct BlobSpec {
  std::size_t n = 600;
  std::size_t d = 64;
  std::uint32_t num_classes = 3;
  double separation = 10.0;  // distance between class means, in units of sigma
  double sigma = 1.0;        // per-coordinate standard deviation
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian blobs. Class c has mean (separation * sigma / sqrt 2) e_c,
/// so every pair of means is `separation * sigma` apart. Labels cycle 0..C-1.
inline FeatureSet make_blobs(const BlobSpec& spec) {
  if (spec.n < 1 || spec.d < 1 || spec.num_classes < 1) {
    throw ValidationError("blob spec needs n, d, C >= 1");
  }
  if (spec.num_classes > spec.d) {
    throw ValidationError("blob spec needs C <= d (class means sit on coordinate axes)");
  }
  if (!(spec.sigma > 0.0)) throw ValidationError("blob sigma must be positive");
  Rng rng(spec.seed);
  FeatureSet fs;
  fs.num_classes = spec.num_classes;
  fs.features.resize(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.d));
  fs.labels.resize(spec.n);
  const double offset = spec.separation * spec.sigma / std::numbers::sqrt2;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto label = static_cast<Label>(i % spec.num_classes);
    fs.labels[i] = label;
    for (std::size_t k = 0; k < spec.d; ++k) {
      const double mean = k == label ? offset : 0.0;
      fs.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          static_cast<float>(mean + spec.sigma * standard_normal(rng));
    }
  }
  return fs;
}

}  // namespace toptune
