#pragma once

// Fine-tuning baseline settings shared with the feature extraction tooling.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "toptune/errors.hpp"

namespace toptune {

struct FineTuneProtocol {
  std::size_t max_steps = 20000;
  std::size_t patience = 10;  // epochs without validation-loss improvement
  std::vector<double> learning_rates = {0.1, 0.01};
  std::string optimizer = "sgd";
};

/// floor(2^(2 log10(n) - 1)), at least 1.
///
/// Powers of ten land exactly on powers of two (n = 1000 gives 32), so a value
/// within 1e-9 relative of an integer is taken as that integer before flooring.
inline std::size_t batch_size(std::size_t n) {
  if (n < 2) throw ValidationError("batch_size needs n >= 2 (got " + std::to_string(n) + ")");
  const double raw = std::exp2(2.0 * std::log10(static_cast<double>(n)) - 1.0);
  const double nearest = std::round(raw);
  const double value = std::abs(raw - nearest) <= 1e-9 * raw ? nearest : std::floor(raw);
  return value < 1.0 ? 1 : static_cast<std::size_t>(value);
}

}  // namespace toptune
