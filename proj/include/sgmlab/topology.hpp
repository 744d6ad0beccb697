#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/gmm.hpp"
#include "sgmlab/optim.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/score_net.hpp"

namespace sgmlab {

using LossMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DistanceMatrix = Eigen::MatrixXd;

/// Per-iterate loss vectors on a fixed subset, each point with one fixed
/// (time, noise) pair. Row r belongs to iterate k0 + r.
struct TrajectoryRecord {
  std::uint64_t k0 = 0, k1 = 0;
  std::vector<Eigen::Index> subset;
  std::vector<double> times;
  std::uint64_t noise_seed = 0;
  LossMatrix losses;

  Eigen::Index iterates() const { return losses.rows(); }
  void validate() const;
};

/// Fixed evaluation batch used to turn parameters into a loss vector.
struct TrajectoryProbe {
  std::vector<Eigen::Index> subset;
  EpsBatch batch;
  std::uint64_t seed = 0;
};

TrajectoryProbe make_probe(const Dataset& data, const NoiseSchedule& schedule, std::size_t max_subset,
                           std::uint64_t seed);
Vector probe_losses(const ScoreNet& net, const TrajectoryProbe& probe);

struct TrajectoryOptions {
  std::size_t max_subset = 3000;
  std::uint64_t seed = 0;
};

/// Continues training from `start` for continuation.steps updates and records
/// the starting iterate plus every updated one.
TrajectoryRecord record_trajectory(const ScoreNet& start, const Dataset& data, const NoiseSchedule& schedule,
                                   const TrainConfig& continuation, const TrajectoryOptions& options);

void save_trajectory(const std::filesystem::path& path, const TrajectoryRecord& record);
TrajectoryRecord load_trajectory(const std::filesystem::path& path);

/// rho(w, w') = (1 / n_sub) sum_i |l_i(w) - l_i(w')|.
DistanceMatrix pseudometric_matrix(const LossMatrix& losses, int threads = 1);
DistanceMatrix pseudometric_matrix(const TrajectoryRecord& record, int threads = 1);

/// Total edge cost of a minimum spanning tree (dense Prim).
double mst_lifetime_sum(const DistanceMatrix& dist);

struct MagnitudeResult {
  double value = 0.0;
  double condition_number = 0.0;  // 1-norm estimate from the LU factorization
  Eigen::Index points = 0;        // after deduplication
  bool jittered = false;
};

/// Sum of the positive parts of the weighting b solving sum_b e^{-r rho(a, b)} b = 1.
MagnitudeResult positive_magnitude_report(const DistanceMatrix& dist, double r);
double positive_magnitude(const DistanceMatrix& dist, double r);

struct BoundParams {
  double loss_bound = 1.0;       // B
  double delta = 0.05;
  double mutual_info = 0.0;      // surrogate; not estimated
  double r = 1.0;
  double lipschitz = 1.0;        // L in PMag(L r W)

  void validate() const;
};

enum class TopologyBound { lifetime, magnitude };

/// lifetime: complexity is E1; B sqrt((log(1 + 4 sqrt(n) E1 / B) + 1 + I + log(1/delta)) / n).
/// magnitude: complexity is PMag(L r W); (2/r) log PMag + r B^2 / n + 3 B sqrt((I + log(1/delta)) / n).
double topology_bound_rhs(double complexity, const BoundParams& params, std::size_t n, TopologyBound variant);

struct MagnitudeBoundMinimum {
  double value = 0.0;
  double r = 0.0;
  double pmag = 0.0;
};

/// Minimizes the magnitude bound over `count` log-spaced r in [r_min, r_max].
MagnitudeBoundMinimum magnitude_bound_minimized(const DistanceMatrix& dist, const BoundParams& params, std::size_t n, double r_min,
                         double r_max, int count);

std::vector<double> standard_scales(std::size_t n);

struct TopologyReport {
  double e1 = 0.0;
  std::map<double, MagnitudeResult> pmag;
  double lifetime_bound = 0.0;
  std::map<double, double> magnitude_bound;
  MagnitudeBoundMinimum magnitude_bound_min;
  BoundParams params;
  std::size_t n = 0;
  Eigen::Index iterates = 0;
};

TopologyReport topology_report(const DistanceMatrix& dist, std::span<const double> scales, const BoundParams& params,
                               std::size_t n);
void to_json(nlohmann::json& j, const TopologyReport& r);

}  // namespace sgmlab
