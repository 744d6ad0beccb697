#include "sgmlab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sgmlab/io.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/rng.hpp"

namespace sgmlab {

void TrajectoryRecord::validate() const {
  if (losses.rows() < 1 || losses.cols() < 1) throw InvalidArgument("trajectory: empty record");
  if (static_cast<Eigen::Index>(subset.size()) != losses.cols() || times.size() != subset.size())
    throw InvalidArgument("trajectory: subset, times and loss rows disagree in length");
  if (k1 < k0 || k1 - k0 + 1 != static_cast<std::uint64_t>(losses.rows()))
    throw InvalidArgument("trajectory: iterate range does not match the number of rows");
  if (!losses.allFinite()) throw NumericalFailure("trajectory: non-finite losses");
}

TrajectoryProbe make_probe(const Dataset& data, const NoiseSchedule& schedule, std::size_t max_subset,
                           std::uint64_t seed) {
  data.validate();
  if (max_subset < 1) throw InvalidArgument("probe: subset size must be >= 1");
  TrajectoryProbe probe;
  probe.seed = seed;
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const std::size_t m = std::min(n, max_subset);
  if (m < n) {
    RngStream rng(seed, Purpose::trajectory, 0);
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
  }
  probe.subset = idx;
  RngStream time_rng(seed, Purpose::trajectory, 1);
  RngStream noise_rng(seed, Purpose::trajectory, 2);
  const auto M = static_cast<Eigen::Index>(m);
  probe.batch.targets = noise_rng.normal_matrix(M, data.dim());
  probe.batch.inputs.resize(M, data.dim());
  probe.batch.times.resize(m);
  for (Eigen::Index i = 0; i < M; ++i) {
    const double t = schedule.times[time_rng.below(schedule.size())];
    probe.batch.times[static_cast<std::size_t>(i)] = t;
    probe.batch.inputs.row(i) = std::exp(-t) * data.points.row(idx[static_cast<std::size_t>(i)]) +
                                std::sqrt(-std::expm1(-2.0 * t)) * probe.batch.targets.row(i);
  }
  return probe;
}

Vector probe_losses(const ScoreNet& net, const TrajectoryProbe& probe) { return eps_errors(net, probe.batch); }

TrajectoryRecord record_trajectory(const ScoreNet& start, const Dataset& data, const NoiseSchedule& schedule,
                                   const TrainConfig& continuation, const TrajectoryOptions& options) {
  const TrajectoryProbe probe = make_probe(data, schedule, options.max_subset, options.seed);
  TrajectoryRecord rec;
  rec.k0 = continuation.step_offset;
  rec.k1 = continuation.step_offset + continuation.steps;
  rec.subset = probe.subset;
  rec.times = probe.batch.times;
  rec.noise_seed = options.seed;
  rec.losses.resize(static_cast<Eigen::Index>(continuation.steps + 1), static_cast<Eigen::Index>(probe.subset.size()));
  rec.losses.row(0) = probe_losses(start, probe).transpose();
  train(start, data, schedule, continuation, [&](std::uint64_t k, const ScoreNet& net) {
    rec.losses.row(static_cast<Eigen::Index>(k - rec.k0 + 1)) = probe_losses(net, probe).transpose();
  });
  return rec;
}

void save_trajectory(const std::filesystem::path& path, const TrajectoryRecord& record) {
  record.validate();
  std::ostringstream body;
  write_f64_le(body, std::span<const double>(record.losses.data(), static_cast<std::size_t>(record.losses.size())));
  write_file_atomic(path, body.str());
  nlohmann::json side = {{"k0", record.k0},
                         {"k1", record.k1},
                         {"rows", record.losses.rows()},
                         {"cols", record.losses.cols()},
                         {"subset", record.subset},
                         {"times", record.times},
                         {"noise_seed", record.noise_seed}};
  write_json(sidecar_path(path), side);
}

TrajectoryRecord load_trajectory(const std::filesystem::path& path) {
  const nlohmann::json side = read_json(sidecar_path(path));
  TrajectoryRecord rec;
  rec.k0 = side.at("k0").get<std::uint64_t>();
  rec.k1 = side.at("k1").get<std::uint64_t>();
  rec.subset = side.at("subset").get<std::vector<Eigen::Index>>();
  rec.times = side.at("times").get<std::vector<double>>();
  rec.noise_seed = side.at("noise_seed").get<std::uint64_t>();
  const auto rows = side.at("rows").get<Eigen::Index>();
  const auto cols = side.at("cols").get<Eigen::Index>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open trajectory " + path.string());
  const auto values = read_f64_le(in, static_cast<std::size_t>(rows * cols));
  rec.losses = Eigen::Map<const LossMatrix>(values.data(), rows, cols);
  rec.validate();
  return rec;
}

DistanceMatrix pseudometric_matrix(const LossMatrix& losses, int threads) {
  const Eigen::Index K = losses.rows();
  const double inv = 1.0 / static_cast<double>(losses.cols());
  DistanceMatrix dist = DistanceMatrix::Zero(K, K);
  parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    for (Eigen::Index j = i + 1; j < K; ++j) dist(j, i) = (losses.row(i) - losses.row(j)).cwiseAbs().sum() * inv;
  });
  dist.triangularView<Eigen::StrictlyUpper>() = dist.transpose();
  return dist;
}

DistanceMatrix pseudometric_matrix(const TrajectoryRecord& record, int threads) {
  record.validate();
  return pseudometric_matrix(record.losses, threads);
}

double mst_lifetime_sum(const DistanceMatrix& dist) {
  const Eigen::Index K = dist.rows();
  if (K < 1 || dist.cols() != K) throw InvalidArgument("mst: need a nonempty square matrix");
  std::vector<double> best(static_cast<std::size_t>(K), std::numeric_limits<double>::infinity());
  std::vector<char> in_tree(static_cast<std::size_t>(K), 0);
  best[0] = 0.0;
  double total = 0.0;
  for (Eigen::Index step = 0; step < K; ++step) {
    Eigen::Index u = -1;
    for (Eigen::Index v = 0; v < K; ++v)
      if (!in_tree[v] && (u < 0 || best[v] < best[u])) u = v;
    in_tree[u] = 1;
    total += best[u];
    for (Eigen::Index v = 0; v < K; ++v)
      if (!in_tree[v] && dist(u, v) < best[v]) best[v] = dist(u, v);
  }
  return total;
}

namespace {

constexpr double kDedupTol = 1e-12;
constexpr double kJitter = 1e-10;

bool solve_weighting(const Eigen::MatrixXd& kernel, Vector& weights, double& cond) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(kernel);
  const double rcond = lu.rcond();
  cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(rcond > std::numeric_limits<double>::epsilon())) return false;
  weights = lu.solve(Vector::Ones(kernel.rows()));
  return weights.allFinite();
}

}  // namespace

MagnitudeResult positive_magnitude_report(const DistanceMatrix& dist, double r) {
  if (!(r > 0.0)) throw InvalidArgument("positive_magnitude: r must be > 0");
  const Eigen::Index K = dist.rows();
  if (K < 1 || dist.cols() != K) throw InvalidArgument("positive_magnitude: need a nonempty square matrix");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < K; ++i) {
    const bool dup = std::any_of(keep.begin(), keep.end(), [&](Eigen::Index j) { return dist(i, j) < kDedupTol; });
    if (!dup) keep.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd kernel(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) kernel(a, b) = std::exp(-r * dist(keep[a], keep[b]));
  MagnitudeResult res;
  res.points = m;
  Vector w;
  if (!solve_weighting(kernel, w, res.condition_number)) {
    res.jittered = true;
    kernel.diagonal().array() += kJitter;
    if (!solve_weighting(kernel, w, res.condition_number))
      throw MagnitudeUndefined("positive_magnitude: weighting system is singular");
  }
  res.value = w.cwiseMax(0.0).sum();
  return res;
}

double positive_magnitude(const DistanceMatrix& dist, double r) { return positive_magnitude_report(dist, r).value; }

void BoundParams::validate() const {
  if (!(loss_bound > 0.0)) throw InvalidArgument("bound params: B must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("bound params: delta must lie in (0, 1)");
  if (!(r > 0.0)) throw InvalidArgument("bound params: r must be > 0");
  if (!(mutual_info >= 0.0)) throw InvalidArgument("bound params: I must be >= 0");
  if (!(lipschitz > 0.0)) throw InvalidArgument("bound params: L must be > 0");
}

double topology_bound_rhs(double complexity, const BoundParams& p, std::size_t n, TopologyBound variant) {
  p.validate();
  if (n < 1) throw InvalidArgument("topology bound: n must be >= 1");
  const double nn = static_cast<double>(n);
  const double B = p.loss_bound;
  const double log_inv = std::log(1.0 / p.delta);
  if (variant == TopologyBound::lifetime)
    return B * std::sqrt((std::log1p(4.0 * std::sqrt(nn) * complexity / B) + 1.0 + p.mutual_info + log_inv) / nn);
  return 2.0 / p.r * std::log(complexity) + p.r * B * B / nn + 3.0 * B * std::sqrt((p.mutual_info + log_inv) / nn);
}

MagnitudeBoundMinimum magnitude_bound_minimized(const DistanceMatrix& dist, const BoundParams& params, std::size_t n, double r_min,
                         double r_max, int count) {
  if (!(r_min > 0.0 && r_max >= r_min) || count < 1) throw InvalidArgument("magnitude_bound_minimized: bad r grid");
  MagnitudeBoundMinimum best;
  best.value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    BoundParams p = params;
    p.r = r_min * std::pow(r_max / r_min, frac);
    const double pmag = positive_magnitude(dist, p.lipschitz * p.r);
    const double v = topology_bound_rhs(pmag, p, n, TopologyBound::magnitude);
    if (v < best.value) best = {v, p.r, pmag};
  }
  return best;
}

std::vector<double> standard_scales(std::size_t n) { return {std::sqrt(static_cast<double>(n)), 1e-2}; }

TopologyReport topology_report(const DistanceMatrix& dist, std::span<const double> scales, const BoundParams& params,
                               std::size_t n) {
  TopologyReport rep;
  rep.params = params;
  rep.n = n;
  rep.iterates = dist.rows();
  rep.e1 = mst_lifetime_sum(dist);
  rep.lifetime_bound = topology_bound_rhs(rep.e1, params, n, TopologyBound::lifetime);
  for (double s : scales) {
    rep.pmag[s] = positive_magnitude_report(dist, s);
    BoundParams p = params;
    p.r = s;
    const double pm = params.lipschitz == 1.0 ? rep.pmag[s].value : positive_magnitude(dist, params.lipschitz * s);
    rep.magnitude_bound[s] = topology_bound_rhs(pm, p, n, TopologyBound::magnitude);
  }
  rep.magnitude_bound_min = magnitude_bound_minimized(dist, params, n, 1e-2, std::max(1.0, std::sqrt(static_cast<double>(n))) * 10.0, 25);
  return rep;
}

void to_json(nlohmann::json& j, const TopologyReport& r) {
  nlohmann::json pmag = nlohmann::json::object(), cond = nlohmann::json::object(), mag_bound = nlohmann::json::object();
  for (const auto& [s, m] : r.pmag) {
    pmag[format_double(s)] = m.value;
    cond[format_double(s)] = m.condition_number;
  }
  for (const auto& [s, v] : r.magnitude_bound) mag_bound[format_double(s)] = v;
  j = {{"E1", r.e1},
       {"PMag", pmag},
       {"condition_number", cond},
       {"iterates", r.iterates},
       {"n", r.n},
       {"bounds",
        {{"lifetime_bound", r.lifetime_bound},
         {"magnitude_bound", mag_bound},
         {"magnitude_bound_min", {{"value", r.magnitude_bound_min.value}, {"r", r.magnitude_bound_min.r}, {"pmag", r.magnitude_bound_min.pmag}}},
         {"B", r.params.loss_bound},
         {"delta", r.params.delta},
         {"I", r.params.mutual_info},
         {"I_estimated", false},
         {"L", r.params.lipschitz}}}};
}

}  // namespace sgmlab
