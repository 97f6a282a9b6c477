#pragma once

// Gaussian kernel k(x, z) = exp(-||x - z||^2 / (2 gamma^2)), scalar and blocked.
//
// The blocked path expands ||x - z||^2 = ||x||^2 + ||z||^2 - 2 x.z. Every output
// entry is produced by the same sequence of floating-point operations no matter
// how the inputs are batched or blocked: the dot product is accumulated over
// the feature index in order, and squared norms are accumulated the same way.
// Scores computed from a batch are therefore bit-identical to scores computed
// from any sub-batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <new>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"

namespace toptune {

struct KernelParams {
  double gamma = 100.0;  // kernel width

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw ValidationError("kernel width gamma must be positive and finite (got " +
                            std::to_string(gamma) + ")");
    }
  }

  double inv_two_gamma_sq() const { return 1.0 / (2.0 * gamma * gamma); }
};

inline double gaussian_kernel(std::span<const double> x, std::span<const double> z,
                              const KernelParams& p) {
  if (x.size() != z.size()) {
    throw ValidationError("kernel dimension mismatch: " + std::to_string(x.size()) + " vs " +
                          std::to_string(z.size()));
  }
  double dist_sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - z[k];
    dist_sq += diff * diff;
  }
  return std::exp(-dist_sq * p.inv_two_gamma_sq());
}

struct KernelOptions {
  Eigen::Index block_size = 64;  // rows/cols per tile
  unsigned threads = 1;          // row-block workers; 0 = hardware concurrency
};

namespace detail {

inline Vector row_squared_norms(const Matrix& x) {
  Vector norms(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.row(i).data();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) acc += row[k] * row[k];
    norms(i) = acc;
  }
  return norms;
}

// Fills out(rows [r0,r1), cols [c0,c1)). `packed` is scratch of size d*block.
inline void kernel_tile(const Matrix& x, const Vector& x_norms, const Matrix& z,
                        const Vector& z_norms, double scale, Eigen::Index r0, Eigen::Index r1,
                        Eigen::Index c0, Eigen::Index c1, std::vector<double>& packed,
                        std::vector<double>& acc, Matrix& out) {
  const Eigen::Index d = x.cols();
  const Eigen::Index width = c1 - c0;
  // z tile transposed: packed[k * width + j] = z(c0 + j, k)
  for (Eigen::Index j = 0; j < width; ++j) {
    const double* zrow = z.row(c0 + j).data();
    for (Eigen::Index k = 0; k < d; ++k) packed[static_cast<std::size_t>(k * width + j)] = zrow[k];
  }
  for (Eigen::Index i = r0; i < r1; ++i) {
    const double* xrow = x.row(i).data();
    std::fill(acc.begin(), acc.begin() + width, 0.0);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double xv = xrow[k];
      const double* zk = packed.data() + k * width;
      for (Eigen::Index j = 0; j < width; ++j) acc[static_cast<std::size_t>(j)] += xv * zk[j];
    }
    for (Eigen::Index j = 0; j < width; ++j) {
      const double dist_sq =
          std::max(0.0, x_norms(i) + z_norms(c0 + j) - 2.0 * acc[static_cast<std::size_t>(j)]);
      out(i, c0 + j) = std::exp(-dist_sq * scale);
    }
  }
}

}  // namespace detail

/// a x b Gram block between the rows of `x` and the rows of `z`.
///
/// Passing the same matrix object twice takes the symmetric path: only the
/// upper tiles are evaluated, mirrored, and the diagonal is exactly 1.
inline Matrix kernel_block(const Matrix& x, const Matrix& z, const KernelParams& p,
                           const KernelOptions& opts = {}) {
  p.validate();
  if (x.cols() != z.cols()) {
    throw ValidationError("kernel dimension mismatch: " + std::to_string(x.cols()) + " vs " +
                          std::to_string(z.cols()));
  }
  if (opts.block_size < 1) throw ValidationError("kernel block size must be >= 1");

  Matrix out;
  try {
    out.resize(x.rows(), z.rows());
  } catch (const std::bad_alloc&) {
    throw NumericError("cannot allocate a " + std::to_string(x.rows()) + "x" +
                       std::to_string(z.rows()) + " kernel block");
  }
  if (x.rows() == 0 || z.rows() == 0) return out;

  const bool symmetric = &x == &z;
  const Vector x_norms = detail::row_squared_norms(x);
  const Vector z_norms = symmetric ? x_norms : detail::row_squared_norms(z);
  const double scale = p.inv_two_gamma_sq();
  const Eigen::Index bs = opts.block_size;
  const Eigen::Index row_blocks = (x.rows() + bs - 1) / bs;

  auto work = [&](Eigen::Index first_block, Eigen::Index stride) {
    std::vector<double> packed(static_cast<std::size_t>(x.cols() * std::min(bs, z.rows())));
    std::vector<double> acc(static_cast<std::size_t>(std::min(bs, z.rows())));
    for (Eigen::Index rb = first_block; rb < row_blocks; rb += stride) {
      const Eigen::Index r0 = rb * bs;
      const Eigen::Index r1 = std::min(r0 + bs, x.rows());
      for (Eigen::Index c0 = symmetric ? r0 : 0; c0 < z.rows(); c0 += bs) {
        const Eigen::Index c1 = std::min(c0 + bs, z.rows());
        detail::kernel_tile(x, x_norms, z, z_norms, scale, r0, r1, c0, c1, packed, acc, out);
      }
    }
  };

  unsigned threads = opts.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                       : opts.threads;
  threads = static_cast<unsigned>(std::min<Eigen::Index>(threads, row_blocks));
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, Eigen::Index{t}, Eigen::Index{threads});
  }

  if (symmetric) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      out(i, i) = 1.0;
      for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
    }
  }
  return out;
}

}  // namespace toptune
