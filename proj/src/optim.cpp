#include "sgmlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sgmlab/io.hpp"

namespace sgmlab {

double SgldConfig::eta_at(std::uint64_t k) const {
  if (eta_table.empty()) return eta;
  return eta_table[std::min<std::size_t>(k, eta_table.size() - 1)];
}

double SgldConfig::max_eta() const {
  if (eta_table.empty()) return eta;
  return *std::max_element(eta_table.begin(), eta_table.end());
}

void SgldConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("sgld: beta must be > 0");
  if (!(a >= 0.0)) throw ConfigError("sgld: regularization a must be >= 0");
  if (!(init_std >= 0.0)) throw ConfigError("sgld: init_std must be >= 0");
  const auto bad_eta = [](double e) { return !(e >= 0.0) || !std::isfinite(e); };
  if (bad_eta(eta) || std::any_of(eta_table.begin(), eta_table.end(), bad_eta))
    throw ConfigError("sgld: step sizes must be finite and >= 0");
  if (max_eta() * a >= 1.0) throw ConfigError("sgld: need sup_k eta_k a < 1");
  if (a > 0.0 && init_std * std::sqrt(beta * a) > std::sqrt(2.0))
    throw ConfigError("sgld: need sigma_0 sqrt(beta a) <= sqrt(2)");
}

void AdamConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("adam: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: decays must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
}

void sgld_step(Eigen::Ref<Vector> params, const Vector& grad, const SgldConfig& config, std::uint64_t k,
               RngStream& rng) {
  if (grad.size() != params.size()) throw InvalidArgument("sgld_step: gradient has wrong size");
  if (!grad.allFinite()) throw NumericalFailure("sgld_step: non-finite gradient", static_cast<long>(k));
  const double eta = config.eta_at(k);
  if (eta == 0.0) return;
  const double noise = std::sqrt(2.0 * eta / config.beta);
  for (Eigen::Index i = 0; i < params.size(); ++i)
    params[i] = (1.0 - config.a * eta) * params[i] - eta * grad[i] + noise * rng.normal();
}

void adam_step(Eigen::Ref<Vector> params, const Vector& grad, AdamState& state, const AdamConfig& config) {
  if (grad.size() != params.size()) throw InvalidArgument("adam_step: gradient has wrong size");
  if (!grad.allFinite()) throw NumericalFailure("adam_step: non-finite gradient", static_cast<long>(state.t));
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  ++state.t;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  params.array() -= config.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

void GradStats::push(double eta, double sq_grad_norm, double loss) {
  sq_grad_norms.push_back(sq_grad_norm);
  losses.push_back(loss);
  step_sizes.push_back(eta);
  partial_sums.push_back(partial_sums.back() + eta);
}

double GradStats::mean_sq_grad_norm() const {
  if (sq_grad_norms.empty()) return 0.0;
  return std::accumulate(sq_grad_norms.begin(), sq_grad_norms.end(), 0.0) / static_cast<double>(sq_grad_norms.size());
}

double last_window_avg(const GradStats& stats, std::size_t window) {
  if (window < 1) throw InvalidArgument("last_window_avg: window must be >= 1");
  const auto& v = stats.sq_grad_norms;
  if (v.empty()) return 0.0;
  const std::size_t w = std::min(window, v.size());
  return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(w), v.end(), 0.0) / static_cast<double>(w);
}

std::string grad_stats_csv(const GradStats& stats) {
  std::ostringstream out;
  out << "step,sq_grad_norm,train_loss\n";
  for (std::size_t k = 0; k < stats.size(); ++k)
    out << k << ',' << format_double(stats.sq_grad_norms[k]) << ',' << format_double(stats.losses[k]) << '\n';
  return out.str();
}

void TrainConfig::validate() const {
  if (kind == OptimizerKind::sgld) sgld.validate();
  else adam.validate();
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be >= 0");
  if (!(divergence_threshold > 0.0)) throw ConfigError("train: divergence threshold must be > 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"optimizer", c.kind == OptimizerKind::sgld ? "sgld" : "adam"},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"seed", c.seed},
       {"step_offset", c.step_offset},
       {"clip_norm", c.clip_norm},
       {"divergence_threshold", c.divergence_threshold}};
  if (c.kind == OptimizerKind::sgld) {
    j["sgld"] = {{"eta", c.sgld.eta}, {"eta_table", c.sgld.eta_table}, {"a", c.sgld.a},
                 {"beta", c.sgld.beta}, {"init_std", c.sgld.init_std}};
  } else {
    j["adam"] = {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  }
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  const std::string kind = j.value("optimizer", "sgld");
  if (kind == "sgld") c.kind = OptimizerKind::sgld;
  else if (kind == "adam") c.kind = OptimizerKind::adam;
  else throw ConfigError("unknown optimizer: " + kind);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.step_offset = j.value("step_offset", c.step_offset);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
  if (j.contains("sgld")) {
    const auto& s = j.at("sgld");
    c.sgld.eta = s.value("eta", c.sgld.eta);
    c.sgld.eta_table = s.value("eta_table", c.sgld.eta_table);
    c.sgld.a = s.value("a", c.sgld.a);
    c.sgld.beta = s.value("beta", c.sgld.beta);
    c.sgld.init_std = s.value("init_std", c.sgld.init_std);
  }
  if (j.contains("adam")) {
    const auto& s = j.at("adam");
    c.adam.lr = s.value("lr", c.adam.lr);
    c.adam.beta1 = s.value("beta1", c.adam.beta1);
    c.adam.beta2 = s.value("beta2", c.adam.beta2);
    c.adam.eps = s.value("eps", c.adam.eps);
  }
}

namespace {

std::vector<Eigen::Index> batch_indices(Eigen::Index n, std::size_t batch, std::uint64_t seed, std::uint64_t k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (batch == 0 || batch >= idx.size()) return idx;
  RngStream rng(seed, Purpose::batch, k);
  for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(batch);
  return idx;
}

}  // namespace

TrainResult train(ScoreNet net, const Dataset& data, const NoiseSchedule& schedule, const TrainConfig& config,
                  const StepHook& hook) {
  config.validate();
  data.validate();
  if (data.dim() != net.arch.input_dim) throw InvalidArgument("train: data dimension does not match the network");
  if (schedule.size() == 0) throw ScheduleError("train: empty schedule");
  TrainResult result;
  AdamState adam;
  auto params = net.params.flat();
  const Eigen::Index d = data.dim();
  for (std::uint64_t s = 0; s < config.steps; ++s) {
    const std::uint64_t k = config.step_offset + s;
    const auto idx = batch_indices(data.size(), config.batch_size, config.seed, k);
    const auto B = static_cast<Eigen::Index>(idx.size());
    RngStream time_rng(config.seed, Purpose::train_time, k);
    RngStream noise_rng(config.seed, Purpose::train_noise, k);
    EpsBatch batch;
    batch.times.resize(idx.size());
    batch.targets = noise_rng.normal_matrix(B, d);
    batch.inputs.resize(B, d);
    for (Eigen::Index i = 0; i < B; ++i) {
      const double t = schedule.times[time_rng.below(schedule.size())];
      batch.times[static_cast<std::size_t>(i)] = t;
      batch.inputs.row(i) = std::exp(-t) * data.points.row(idx[static_cast<std::size_t>(i)]) +
                            std::sqrt(-std::expm1(-2.0 * t)) * batch.targets.row(i);
    }
    LossAndGradient lg = backprop_eps_loss(net, batch);
    if (!std::isfinite(lg.loss) || lg.loss > config.divergence_threshold || !lg.gradient.allFinite())
      throw NumericalFailure("train: diverged, loss " + format_double(lg.loss), static_cast<long>(k));
    const double g2 = lg.gradient.squaredNorm();
    if (config.clip_norm > 0.0 && g2 > config.clip_norm * config.clip_norm)
      lg.gradient *= config.clip_norm / std::sqrt(g2);
    double eta = 0.0;
    if (config.kind == OptimizerKind::sgld) {
      eta = config.sgld.eta_at(k);
      RngStream rng(config.seed, Purpose::sgld, k);
      sgld_step(params, lg.gradient, config.sgld, k, rng);
    } else {
      eta = config.adam.lr;
      adam_step(params, lg.gradient, adam, config.adam);
    }
    result.stats.push(eta, g2, lg.loss);
    if (hook) hook(k, net);
  }
  result.net = std::move(net);
  return result;
}

double sgld_bound_rhs(const GradStats& stats, const SgldConfig& config, double tau, double delta, std::size_t n) {
  if (!(tau > 0.0)) throw InvalidArgument("sgld_bound_rhs: tau must be > 0");
  if (!(delta > 0.0 && delta < 3.0)) throw InvalidArgument("sgld_bound_rhs: delta must lie in (0, 3)");
  if (n < 1) throw InvalidArgument("sgld_bound_rhs: n must be >= 1");
  const std::size_t K = stats.size();
  const double S_K = stats.partial_sums.back();
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    sum += stats.step_sizes[k] * std::exp(-0.5 * config.a * (S_K - stats.partial_sums[k])) * stats.sq_grad_norms[k];
  return 2.0 * tau / std::sqrt(static_cast<double>(n)) * std::sqrt(0.5 * config.beta * sum + std::log(3.0 / delta));
}

double proxy_b(std::size_t n, double eta, double beta, double avg_sq_grad) {
  if (n < 1) throw InvalidArgument("proxy_b: n must be >= 1");
  return std::sqrt(eta * beta * avg_sq_grad) / static_cast<double>(n);
}

double proxy_b_sqrt_n(std::size_t n, double eta, double beta, double avg_sq_grad) {
  if (n < 1) throw InvalidArgument("proxy_b: n must be >= 1");
  return std::sqrt(eta * beta * avg_sq_grad) / std::sqrt(static_cast<double>(n));
}

double heuristic_beta(std::size_t batch_size, double eta) {
  if (batch_size < 1) throw InvalidArgument("heuristic_beta: batch size must be >= 1");
  if (!(eta > 0.0)) throw InvalidArgument("heuristic_beta: eta must be > 0");
  return static_cast<double>(batch_size) / eta;
}

}  // namespace sgmlab
