#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/estimate.hpp"
#include "sgmlab/rng.hpp"
#include "sgmlab/types.hpp"

namespace sgmlab {

/// Isotropic Gaussian mixture sum_j w_j N(m_j, sigma2 I_d).
struct GmmSpec {
  std::vector<double> weights;
  PointMatrix means;  // J x d
  double sigma2 = 1.0;
  std::uint64_t seed = 0;  // seed that drew the means, when they were drawn

  Eigen::Index dim() const { return means.cols(); }
  std::size_t components() const { return weights.size(); }
  /// max_j |m_j| + 6 sigma: effective support radius used wherever a bounded
  /// support is assumed.
  double support_radius() const;
  void validate() const;
};

/// Means drawn once, uniformly in [-1, 1]^d, from RngStream(seed, gmm_means).
GmmSpec gmm_with_random_means(std::vector<double> weights, Eigen::Index dim, double sigma, std::uint64_t seed);

/// Nine-component mixture in R^4 with sigma = 0.05 and the imbalanced weights
/// (0.01, 0.1, 0.3, 0.2, 0.02, 0.15, 0.02, 0.15, 0.05).
GmmSpec reference_gmm(std::uint64_t mean_seed = 0);

struct Dataset {
  PointMatrix points;  // n x d
  std::string provenance = "external";
  std::uint64_t seed = 0;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  void validate() const;
};

Dataset sample_gmm(const GmmSpec& spec, std::size_t n, RngStream& rng);
Dataset sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed, Purpose purpose = Purpose::data);

/// Rejection sampler restricted to the ball B(0, support_radius()).
Dataset sample_truncated_gmm(const GmmSpec& spec, std::size_t n, RngStream& rng);

/// Law of the OU marginal at time t started from a mixture or a point cloud:
/// sum_j exp(log_weights_j) N(means_j, variance I).
struct IsotropicMixture {
  Vector log_weights;
  PointMatrix means;
  double variance = 1.0;
};

IsotropicMixture diffuse(const GmmSpec& spec, double t);
IsotropicMixture diffuse(const Dataset& data, double t);

/// Lebesgue score of the mixture, with log-sum-exp responsibilities.
PointMatrix mixture_score(const IsotropicMixture& mix, const PointMatrix& x);
Vector mixture_log_density(const IsotropicMixture& mix, const PointMatrix& x);

PointMatrix true_diffused_score(const GmmSpec& spec, double t, const PointMatrix& x, ScoreConvention convention);
Vector true_diffused_score(const GmmSpec& spec, double t, const Vector& x, ScoreConvention convention);

PointMatrix empirical_diffused_score(const Dataset& data, double t, const PointMatrix& x,
                                     ScoreConvention convention);
Vector empirical_diffused_score(const Dataset& data, double t, const Vector& x, ScoreConvention convention);

/// Log density (Lebesgue) of the diffused mixture at time t.
double log_density_at_time(const GmmSpec& spec, double t, const Vector& x);
double log_density_at_time(const Dataset& data, double t, const Vector& x);

/// Samples of the OU marginal at time t started from the mixture / the dataset.
PointMatrix sample_diffused(const GmmSpec& spec, double t, std::size_t m, RngStream& rng);
PointMatrix sample_diffused(const Dataset& data, double t, std::size_t m, RngStream& rng);

using Field = std::function<PointMatrix(const PointMatrix&)>;
using Sampler = std::function<PointMatrix(std::size_t, RngStream&)>;

/// Monte Carlo relative Fisher information: E_p |score_p - score_q|^2.
Estimate fisher_mc(const Field& score_p, const Field& score_q, const Sampler& sampler_p, std::size_t samples,
                   RngStream& rng);

/// Monte Carlo KL(mu | gamma^d).
Estimate kl_mc(const GmmSpec& spec, std::size_t samples, RngStream& rng);

double second_moment(const GmmSpec& spec);
double second_moment(const Dataset& data);

double standard_gaussian_log_density(const Vector& x);

nlohmann::json gmm_to_json(const GmmSpec& spec);
GmmSpec gmm_from_json(const nlohmann::json& j);

}  // namespace sgmlab
