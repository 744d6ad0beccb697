#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/types.hpp"

namespace sgmlab {

enum class ScheduleKind { uniform, cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

/// Discretized forward times t_1 < ... < t_N of the OU process with
/// alpha(t) = exp(-2t). The origin t_0 = 0 is implicit.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::uniform;
  std::vector<double> times;   // t_1..t_N
  std::vector<double> alphas;  // exp(-2 t_i)
  std::vector<double> steps;   // t_i - t_{i-1}
  double cosine_offset = 0.008;
  double ratio_cap = 0.999;
  // Cosine only: the grid on [0, 1 - zeta] that produced the times.
  double truncation = 0.0;

  std::size_t size() const { return times.size(); }
  double horizon() const { return times.back(); }
  double min_step() const;
};

double alpha_of(double t);

NoiseSchedule build_uniform_schedule(double horizon, int steps);

/// Cosine schedule: alpha_bar(u) = f(u)/f(0) with f(u) = cos((u+s)/(1+s) * pi/2),
/// on N equally spaced points u_i = i (1 - zeta) / N, i = 1..N, with zeta the
/// smallest truncation (binary search, 1e-6 resolution) for which every
/// consecutive ratio satisfies 1 - alpha_bar_i / alpha_bar_{i-1} <= ratio_cap.
NoiseSchedule build_cosine_schedule(int steps, double offset = 0.008, double ratio_cap = 0.999);

/// Keeps `steps` of the base times, evenly strided and always including the
/// last one, so the horizon is unchanged.
NoiseSchedule respace_schedule(const NoiseSchedule& base, int steps);

struct TimeAtom {
  double time;
  double weight;
};

/// Discrete probability measure on diffusion times.
struct TimeMeasure {
  std::vector<TimeAtom> atoms;

  std::size_t size() const { return atoms.size(); }
  double integrate(const std::function<double(double)>& f) const;
  void validate() const;
};

/// Weighting of the score error: the atom at t_k carries weight h_k / T.
/// For the uniform schedule that is 1/N on {h, ..., T}.
TimeMeasure lambda_measure(const NoiseSchedule& schedule);

/// Uniform measure on the schedule times (training distribution of the eps-loss).
TimeMeasure nu_measure(const NoiseSchedule& schedule);

TimeMeasure single_atom(double t);

nlohmann::json schedule_to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace sgmlab
