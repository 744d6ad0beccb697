#include "sgmlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

namespace sgmlab {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::uniform ? "uniform" : "cosine"; }

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "uniform") return ScheduleKind::uniform;
  if (s == "cosine") return ScheduleKind::cosine;
  throw InvalidArgument("unknown schedule kind '" + s + "'");
}

double alpha_of(double t) { return std::exp(-2.0 * t); }

double NoiseSchedule::min_step() const { return *std::min_element(steps.begin(), steps.end()); }

namespace {

void fill_from_times(NoiseSchedule& s) {
  s.alphas.resize(s.times.size());
  s.steps.resize(s.times.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    s.alphas[i] = alpha_of(s.times[i]);
    s.steps[i] = s.times[i] - prev;
    prev = s.times[i];
  }
}

double cosine_f(double u, double offset) {
  return std::cos((u + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
}

std::vector<double> cosine_alpha_bars(int steps, double offset, double truncation) {
  const double f0 = cosine_f(0.0, offset);
  std::vector<double> out(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    const double u = (1.0 - truncation) * static_cast<double>(i) / steps;
    out[i] = cosine_f(u, offset) / f0;
  }
  return out;
}

bool satisfies_cap(const std::vector<double>& bars, double cap) {
  for (std::size_t i = 1; i < bars.size(); ++i) {
    if (!(bars[i] > 0.0) || !(bars[i] < bars[i - 1])) return false;
    if (1.0 - bars[i] / bars[i - 1] > cap) return false;
  }
  return true;
}

}  // namespace

NoiseSchedule build_uniform_schedule(double horizon, int steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("schedule horizon must be positive");
  if (steps < 1) throw InvalidArgument("schedule step count must be >= 1");
  NoiseSchedule s;
  s.kind = ScheduleKind::uniform;
  s.times.resize(steps);
  for (int k = 1; k <= steps; ++k) s.times[k - 1] = horizon * static_cast<double>(k) / steps;
  s.times.back() = horizon;
  fill_from_times(s);
  return s;
}

NoiseSchedule respace_schedule(const NoiseSchedule& base, int steps) {
  const auto N = static_cast<long>(base.size());
  if (steps < 1 || steps > N) throw InvalidArgument("respace_schedule: need 1 <= steps <= base size");
  NoiseSchedule s = base;
  s.times.resize(static_cast<std::size_t>(steps));
  for (long i = 1; i <= steps; ++i) {
    const long j = std::lround(static_cast<double>(i) * static_cast<double>(N) / steps);
    s.times[static_cast<std::size_t>(i - 1)] = base.times[static_cast<std::size_t>(j - 1)];
  }
  fill_from_times(s);
  return s;
}

NoiseSchedule build_cosine_schedule(int steps, double offset, double ratio_cap) {
  if (steps < 2) throw InvalidArgument("cosine schedule needs at least 2 steps");
  if (!(offset > 0.0)) throw InvalidArgument("cosine offset must be positive");
  if (!(ratio_cap > 0.0 && ratio_cap < 1.0)) throw InvalidArgument("ratio cap must lie in (0, 1)");

  // Ratios shrink as the grid is truncated, so the feasible set is an interval [zeta*, 1).
  double lo = 0.0;
  double hi = 1.0 - 1e-6;
  if (satisfies_cap(cosine_alpha_bars(steps, offset, lo), ratio_cap)) {
    hi = lo;
  } else {
    if (!satisfies_cap(cosine_alpha_bars(steps, offset, hi), ratio_cap))
      throw ScheduleError("cosine schedule: ratio cap cannot be met for any truncation");
    while (hi - lo > 1e-6) {
      const double mid = 0.5 * (lo + hi);
      if (satisfies_cap(cosine_alpha_bars(steps, offset, mid), ratio_cap))
        hi = mid;
      else
        lo = mid;
    }
  }

  const auto bars = cosine_alpha_bars(steps, offset, hi);
  NoiseSchedule s;
  s.kind = ScheduleKind::cosine;
  s.cosine_offset = offset;
  s.ratio_cap = ratio_cap;
  s.truncation = hi;
  s.times.resize(steps);
  for (int i = 1; i <= steps; ++i) s.times[i - 1] = -0.5 * std::log(bars[i]);
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    const bool ok = s.times[i] > 0.0 && (i == 0 || s.times[i] > s.times[i - 1]);
    if (!ok) throw ScheduleError("cosine schedule: times are not strictly increasing");
  }
  fill_from_times(s);
  return s;
}

double TimeMeasure::integrate(const std::function<double(double)>& f) const {
  double acc = 0.0;
  for (const auto& a : atoms) acc += a.weight * f(a.time);
  return acc;
}

void TimeMeasure::validate() const {
  if (atoms.empty()) throw InvalidArgument("time measure has no atoms");
  double total = 0.0;
  for (const auto& a : atoms) {
    if (!(a.time > 0.0)) throw InvalidArgument("time measure atoms must be positive");
    if (!(a.weight > 0.0)) throw InvalidArgument("time measure weights must be positive");
    total += a.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("time measure weights must sum to 1");
}

TimeMeasure lambda_measure(const NoiseSchedule& schedule) {
  TimeMeasure m;
  const double horizon = schedule.horizon();
  double total = 0.0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const double w = schedule.kind == ScheduleKind::uniform ? 1.0 / static_cast<double>(schedule.size())
                                                            : schedule.steps[k] / horizon;
    m.atoms.push_back({schedule.times[k], w});
    total += w;
  }
  for (auto& a : m.atoms) a.weight /= total;
  return m;
}

TimeMeasure nu_measure(const NoiseSchedule& schedule) {
  TimeMeasure m;
  const double w = 1.0 / static_cast<double>(schedule.size());
  for (double t : schedule.times) m.atoms.push_back({t, w});
  return m;
}

TimeMeasure single_atom(double t) { return TimeMeasure{{{t, 1.0}}}; }

nlohmann::json schedule_to_json(const NoiseSchedule& schedule) {
  return {
      {"kind", to_string(schedule.kind)},
      {"N", schedule.size()},
      {"s", schedule.cosine_offset},
      {"ratio_cap", schedule.ratio_cap},
      {"truncation", schedule.truncation},
      {"times", schedule.times},
      {"alphas", schedule.alphas},
  };
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  NoiseSchedule s;
  s.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  s.times = j.at("times").get<std::vector<double>>();
  s.cosine_offset = j.value("s", 0.008);
  s.ratio_cap = j.value("ratio_cap", 0.999);
  s.truncation = j.value("truncation", 0.0);
  if (s.times.empty() || s.times.size() != j.at("N").get<std::size_t>())
    throw InvalidArgument("schedule json: N does not match times");
  for (std::size_t i = 0; i < s.times.size(); ++i)
    if (!(s.times[i] > 0.0) || (i > 0 && !(s.times[i] > s.times[i - 1])))
      throw InvalidArgument("schedule json: times must be positive and strictly increasing");
  fill_from_times(s);
  return s;
}

}  // namespace sgmlab
