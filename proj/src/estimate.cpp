#include "sgmlab/estimate.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "sgmlab/types.hpp"

namespace sgmlab {

Estimate estimate_from(std::span<const double> replicates) {
  const std::size_t m = replicates.size();
  if (m < 2) throw InvalidArgument("estimate needs at least two replicates");
  double mean = 0.0;
  for (double v : replicates) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : replicates) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(m - 1);
  return {mean, std::sqrt(var / static_cast<double>(m)), m};
}

Estimate difference(const Estimate& a, const Estimate& b) {
  return {a.value - b.value, combined_stderr(a, b), std::min(a.samples, b.samples)};
}

void to_json(nlohmann::json& j, const Estimate& e) {
  j = {{"value", e.value}, {"stderr", e.std_error}, {"samples", e.samples}};
}

}  // namespace sgmlab
