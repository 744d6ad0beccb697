#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sgmlab {

/// Monte Carlo mean with its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Mean and standard error of i.i.d. replicates.
Estimate estimate_from(std::span<const double> replicates);

inline double combined_stderr(const Estimate& a, const Estimate& b) {
  return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

/// a - b for independent estimates.
Estimate difference(const Estimate& a, const Estimate& b);

void to_json(nlohmann::json& j, const Estimate& e);

}  // namespace sgmlab
