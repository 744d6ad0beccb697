#include "sgmlab/diffusion.hpp"

#include <cmath>

#include "sgmlab/parallel.hpp"

namespace sgmlab {

Vector forward_sample(const Vector& x0, double t, const Vector& g) {
  if (t < 0.0) throw InvalidArgument("forward_sample: negative time");
  const double a = alpha_of(t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * g;
}

PointMatrix forward_sample(const PointMatrix& x0, double t, const PointMatrix& g) {
  if (t < 0.0) throw InvalidArgument("forward_sample: negative time");
  const double a = alpha_of(t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * g;
}

Vector conditional_score(const Vector& x, const Vector& x0, double t, ScoreConvention convention) {
  if (!(t > 0.0)) throw InvalidArgument("conditional_score: time must be positive");
  const double var = -std::expm1(-2.0 * t);
  const Vector mean = std::exp(-t) * x0;
  Vector s = (mean - x) / var;
  if (convention == ScoreConvention::gamma) s += x;
  return s;
}

PointMatrix conditional_score(const PointMatrix& x, const PointMatrix& x0, double t, ScoreConvention convention) {
  if (!(t > 0.0)) throw InvalidArgument("conditional_score: time must be positive");
  const double var = -std::expm1(-2.0 * t);
  const PointMatrix mean = std::exp(-t) * x0;
  PointMatrix s = (mean - x) / var;
  if (convention == ScoreConvention::gamma) s += x;
  return s;
}

void lebesgue_to_gamma(PointMatrix& score, const PointMatrix& x, double factor) { score += factor * x; }

PointMatrix ei_backward_sample(const ScoreField& score, const NoiseSchedule& schedule, std::size_t count,
                               Eigen::Index dim, const SamplerOptions& options) {
  if (count == 0) throw InvalidArgument("ei_backward_sample: need at least one chain");
  const auto m = static_cast<Eigen::Index>(count);
  const std::size_t n_steps = schedule.size();

  // Pre-draw each chain's noise: one initial point plus one increment per step.
  PointMatrix x(m, dim);
  std::vector<PointMatrix> noise(n_steps, PointMatrix(m, dim));
  parallel_for(count, options.threads, [&](std::size_t i) {
    RngStream rng(options.seed, Purpose::backward_noise, i);
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < dim; ++j) x(r, j) = rng.normal();
    for (std::size_t k = 0; k < n_steps; ++k)
      for (Eigen::Index j = 0; j < dim; ++j) noise[k](r, j) = rng.normal();
  });

  // Backward step k uses the forward time t_{N-k} and the step h_{N-k} that ends there.
  for (std::size_t k = 0; k < n_steps; ++k) {
    const std::size_t idx = n_steps - 1 - k;
    const double t = schedule.times[idx];
    const double h = schedule.steps[idx];
    PointMatrix drift = score(t, x);
    if (drift.rows() != m || drift.cols() != dim)
      throw InvalidArgument("ei_backward_sample: score returned wrong shape");
    if (!drift.allFinite()) throw NumericalFailure("ei_backward_sample: non-finite score", static_cast<long>(k));
    const double decay = std::exp(-h);
    const double sd = std::sqrt(-std::expm1(-2.0 * h));
    x = decay * x + (-std::expm1(-h)) * drift + sd * noise[k];
  }
  return x;
}

}  // namespace sgmlab
