#pragma once

#include <cstdint>

#include "sgmlab/rng.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/types.hpp"

namespace sgmlab {

/// sqrt(alpha(t)) x0 + sqrt(1 - alpha(t)) g.
Vector forward_sample(const Vector& x0, double t, const Vector& g);

/// Row-wise forward_sample on a batch.
PointMatrix forward_sample(const PointMatrix& x0, double t, const PointMatrix& g);

/// Score of the OU transition kernel N(e^{-t} x0, (1 - e^{-2t}) I) at x.
/// The gamma convention is the score relative to the standard Gaussian, i.e.
/// the Lebesgue score plus x.
Vector conditional_score(const Vector& x, const Vector& x0, double t, ScoreConvention convention);
PointMatrix conditional_score(const PointMatrix& x, const PointMatrix& x0, double t, ScoreConvention convention);

/// Converts a Lebesgue score into the gamma convention (adds x), in place.
void lebesgue_to_gamma(PointMatrix& score, const PointMatrix& x, double factor = 1.0);

struct SamplerOptions {
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Exponential-integrator backward sampler for dX = (-X + s(T - t, X)) dt + sqrt(2) dB
/// started from the standard Gaussian, with s frozen over each step.
///
/// `score` must return s = 2 grad log p~ (gamma convention, factor 2 included).
/// Chain i draws all its noise from RngStream(seed, backward_noise, i), so the
/// result does not depend on the thread count.
PointMatrix ei_backward_sample(const ScoreField& score, const NoiseSchedule& schedule, std::size_t count,
                               Eigen::Index dim, const SamplerOptions& options);

}  // namespace sgmlab
