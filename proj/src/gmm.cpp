#include "sgmlab/gmm.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sgmlab/diffusion.hpp"

namespace sgmlab {

double GmmSpec::support_radius() const {
  double r = 0.0;
  for (Eigen::Index j = 0; j < means.rows(); ++j) r = std::max(r, means.row(j).norm());
  return r + 6.0 * std::sqrt(sigma2);
}

void GmmSpec::validate() const {
  if (weights.empty()) throw InvalidArgument("gmm: no components");
  if (static_cast<Eigen::Index>(weights.size()) != means.rows()) throw InvalidArgument("gmm: weights/means mismatch");
  if (means.cols() < 1) throw InvalidArgument("gmm: dimension must be >= 1");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("gmm: sigma2 must be positive");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw InvalidArgument("gmm: weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("gmm: weights must sum to 1");
  if (!means.allFinite()) throw InvalidArgument("gmm: non-finite mean");
}

GmmSpec gmm_with_random_means(std::vector<double> weights, Eigen::Index dim, double sigma, std::uint64_t seed) {
  GmmSpec spec;
  spec.weights = std::move(weights);
  spec.sigma2 = sigma * sigma;
  spec.seed = seed;
  spec.means.resize(static_cast<Eigen::Index>(spec.weights.size()), dim);
  RngStream rng(seed, Purpose::gmm_means);
  for (Eigen::Index j = 0; j < spec.means.rows(); ++j)
    for (Eigen::Index k = 0; k < dim; ++k) spec.means(j, k) = 2.0 * rng.uniform() - 1.0;
  spec.validate();
  return spec;
}

GmmSpec reference_gmm(std::uint64_t mean_seed) {
  return gmm_with_random_means({0.01, 0.1, 0.3, 0.2, 0.02, 0.15, 0.02, 0.15, 0.05}, 4, 0.05, mean_seed);
}

void Dataset::validate() const {
  if (points.rows() < 1) throw InvalidArgument("dataset: need at least one point");
  if (!points.allFinite()) throw InvalidArgument("dataset: non-finite entry");
}

namespace {

std::size_t pick_component(const std::vector<double>& weights, double u) {
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < weights.size(); ++j) {
    acc += weights[j];
    if (u < acc) return j;
  }
  return weights.size() - 1;
}

void draw_point(const GmmSpec& spec, RngStream& rng, Eigen::Ref<PointMatrix> row) {
  const std::size_t j = pick_component(spec.weights, rng.uniform());
  const double sd = std::sqrt(spec.sigma2);
  for (Eigen::Index k = 0; k < spec.dim(); ++k) row(0, k) = spec.means(static_cast<Eigen::Index>(j), k) + sd * rng.normal();
}

}  // namespace

Dataset sample_gmm(const GmmSpec& spec, std::size_t n, RngStream& rng) {
  if (n < 1) throw InvalidArgument("sample_gmm: n must be >= 1");
  Dataset out;
  out.points.resize(static_cast<Eigen::Index>(n), spec.dim());
  for (Eigen::Index i = 0; i < out.points.rows(); ++i) draw_point(spec, rng, out.points.row(i));
  out.provenance = "gmm";
  return out;
}

Dataset sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed, Purpose purpose) {
  RngStream rng(seed, purpose);
  Dataset out = sample_gmm(spec, n, rng);
  out.seed = seed;
  return out;
}

Dataset sample_truncated_gmm(const GmmSpec& spec, std::size_t n, RngStream& rng) {
  if (n < 1) throw InvalidArgument("sample_truncated_gmm: n must be >= 1");
  const double radius = spec.support_radius();
  Dataset out;
  out.points.resize(static_cast<Eigen::Index>(n), spec.dim());
  for (Eigen::Index i = 0; i < out.points.rows(); ++i) {
    do {
      draw_point(spec, rng, out.points.row(i));
    } while (out.points.row(i).norm() > radius);
  }
  out.provenance = "truncated-gmm";
  return out;
}

IsotropicMixture diffuse(const GmmSpec& spec, double t) {
  if (t < 0.0) throw InvalidArgument("diffuse: negative time");
  IsotropicMixture mix;
  const double decay = std::exp(-t);
  mix.means = decay * spec.means;
  mix.variance = spec.sigma2 * decay * decay - std::expm1(-2.0 * t);
  mix.log_weights.resize(static_cast<Eigen::Index>(spec.weights.size()));
  for (std::size_t j = 0; j < spec.weights.size(); ++j) mix.log_weights[static_cast<Eigen::Index>(j)] = std::log(spec.weights[j]);
  return mix;
}

IsotropicMixture diffuse(const Dataset& data, double t) {
  if (!(t > 0.0)) throw InvalidArgument("empirical marginal is atomic at t = 0; time must be positive");
  IsotropicMixture mix;
  mix.means = std::exp(-t) * data.points;
  mix.variance = -std::expm1(-2.0 * t);
  mix.log_weights = Vector::Constant(data.size(), -std::log(static_cast<double>(data.size())));
  return mix;
}

namespace {

// Responsibilities of each component for point x, plus the log normalizer.
double responsibilities(const IsotropicMixture& mix, const Eigen::Ref<const Eigen::RowVectorXd>& x, Vector& resp) {
  const Eigen::Index J = mix.means.rows();
  resp.resize(J);
  const double inv2v = 0.5 / mix.variance;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < J; ++j) {
    resp[j] = mix.log_weights[j] - (mix.means.row(j) - x).squaredNorm() * inv2v;
    best = std::max(best, resp[j]);
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    resp[j] = std::exp(resp[j] - best);
    total += resp[j];
  }
  resp /= total;
  return best + std::log(total);
}

void require_finite(const PointMatrix& x) {
  if (!x.allFinite()) throw InvalidArgument("score oracle: non-finite input point");
}

}  // namespace

PointMatrix mixture_score(const IsotropicMixture& mix, const PointMatrix& x) {
  PointMatrix out(x.rows(), x.cols());
  Vector resp;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    responsibilities(mix, x.row(i), resp);
    // sum_j r_j (m_j - x) / v
    out.row(i) = (resp.transpose() * mix.means - x.row(i)) / mix.variance;
  }
  return out;
}

Vector mixture_log_density(const IsotropicMixture& mix, const PointMatrix& x) {
  Vector out(x.rows());
  Vector resp;
  const double d = static_cast<double>(x.cols());
  const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * mix.variance);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = norm + responsibilities(mix, x.row(i), resp);
  return out;
}

PointMatrix true_diffused_score(const GmmSpec& spec, double t, const PointMatrix& x, ScoreConvention convention) {
  require_finite(x);
  PointMatrix s = mixture_score(diffuse(spec, t), x);
  if (convention == ScoreConvention::gamma) lebesgue_to_gamma(s, x);
  return s;
}

Vector true_diffused_score(const GmmSpec& spec, double t, const Vector& x, ScoreConvention convention) {
  PointMatrix row = x.transpose();
  return true_diffused_score(spec, t, row, convention).row(0).transpose();
}

PointMatrix empirical_diffused_score(const Dataset& data, double t, const PointMatrix& x,
                                     ScoreConvention convention) {
  require_finite(x);
  PointMatrix s = mixture_score(diffuse(data, t), x);
  if (convention == ScoreConvention::gamma) lebesgue_to_gamma(s, x);
  return s;
}

Vector empirical_diffused_score(const Dataset& data, double t, const Vector& x, ScoreConvention convention) {
  PointMatrix row = x.transpose();
  return empirical_diffused_score(data, t, row, convention).row(0).transpose();
}

double log_density_at_time(const GmmSpec& spec, double t, const Vector& x) {
  PointMatrix row = x.transpose();
  return mixture_log_density(diffuse(spec, t), row)[0];
}

double log_density_at_time(const Dataset& data, double t, const Vector& x) {
  PointMatrix row = x.transpose();
  return mixture_log_density(diffuse(data, t), row)[0];
}

PointMatrix sample_diffused(const GmmSpec& spec, double t, std::size_t m, RngStream& rng) {
  PointMatrix x0 = sample_gmm(spec, m, rng).points;
  PointMatrix g = rng.normal_matrix(x0.rows(), x0.cols());
  return forward_sample(x0, t, g);
}

PointMatrix sample_diffused(const Dataset& data, double t, std::size_t m, RngStream& rng) {
  PointMatrix x0(static_cast<Eigen::Index>(m), data.dim());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) x0.row(i) = data.points.row(static_cast<Eigen::Index>(rng.below(data.size())));
  PointMatrix g = rng.normal_matrix(x0.rows(), x0.cols());
  return forward_sample(x0, t, g);
}

Estimate fisher_mc(const Field& score_p, const Field& score_q, const Sampler& sampler_p, std::size_t samples,
                   RngStream& rng) {
  if (samples < 2) throw InvalidArgument("fisher_mc: need at least 2 samples");
  const PointMatrix x = sampler_p(samples, rng);
  const PointMatrix diff = score_p(x) - score_q(x);
  if (!diff.allFinite()) throw NumericalFailure("fisher_mc: non-finite score");
  std::vector<double> rep(samples);
  for (std::size_t i = 0; i < samples; ++i) rep[i] = diff.row(static_cast<Eigen::Index>(i)).squaredNorm();
  return estimate_from(rep);
}

double standard_gaussian_log_density(const Vector& x) {
  return -0.5 * x.squaredNorm() - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

Estimate kl_mc(const GmmSpec& spec, std::size_t samples, RngStream& rng) {
  if (samples < 2) throw InvalidArgument("kl_mc: need at least 2 samples");
  const PointMatrix x = sample_gmm(spec, samples, rng).points;
  const Vector logp = mixture_log_density(diffuse(spec, 0.0), x);
  std::vector<double> rep(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    rep[i] = logp[r] - standard_gaussian_log_density(x.row(r).transpose());
  }
  return estimate_from(rep);
}

double second_moment(const GmmSpec& spec) {
  double acc = 0.0;
  const double d = static_cast<double>(spec.dim());
  for (std::size_t j = 0; j < spec.weights.size(); ++j)
    acc += spec.weights[j] * (spec.means.row(static_cast<Eigen::Index>(j)).squaredNorm() + d * spec.sigma2);
  return acc;
}

double second_moment(const Dataset& data) {
  return data.points.rowwise().squaredNorm().sum() / static_cast<double>(data.size());
}

nlohmann::json gmm_to_json(const GmmSpec& spec) {
  nlohmann::json means = nlohmann::json::array();
  for (Eigen::Index j = 0; j < spec.means.rows(); ++j) {
    std::vector<double> row(spec.means.row(j).begin(), spec.means.row(j).end());
    means.push_back(row);
  }
  return {{"d", spec.dim()}, {"weights", spec.weights}, {"means", means}, {"sigma2", spec.sigma2}, {"seed", spec.seed}};
}

GmmSpec gmm_from_json(const nlohmann::json& j) {
  GmmSpec spec;
  spec.weights = j.at("weights").get<std::vector<double>>();
  spec.sigma2 = j.at("sigma2").get<double>();
  spec.seed = j.value("seed", std::uint64_t{0});
  const auto d = j.at("d").get<Eigen::Index>();
  const auto& means = j.at("means");
  spec.means.resize(static_cast<Eigen::Index>(means.size()), d);
  for (std::size_t r = 0; r < means.size(); ++r) {
    const auto row = means[r].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != d) throw InvalidArgument("gmm json: mean has wrong dimension");
    for (Eigen::Index k = 0; k < d; ++k) spec.means(static_cast<Eigen::Index>(r), k) = row[static_cast<std::size_t>(k)];
  }
  spec.validate();
  return spec;
}

}  // namespace sgmlab
