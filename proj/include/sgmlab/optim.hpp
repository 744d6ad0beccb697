#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/gmm.hpp"
#include "sgmlab/rng.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/score_net.hpp"

namespace sgmlab {

/// theta <- (1 - a eta_k) theta - eta_k g + sqrt(2 eta_k / beta) xi.
struct SgldConfig {
  double eta = 1e-3;
  // Per-step table; overrides `eta` when nonempty. Steps past the end reuse the last entry.
  std::vector<double> eta_table;
  double a = 0.0;
  double beta = 1e6;
  double init_std = 0.0;  // sigma_0, only used for the precondition check

  double eta_at(std::uint64_t k) const;
  double max_eta() const;
  /// Throws ConfigError if sup eta_k a >= 1 or sigma_0 sqrt(beta a) > sqrt 2.
  void validate() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  Vector m, v;
  std::uint64_t t = 0;
};

void sgld_step(Eigen::Ref<Vector> params, const Vector& grad, const SgldConfig& config, std::uint64_t k,
               RngStream& rng);
void adam_step(Eigen::Ref<Vector> params, const Vector& grad, AdamState& state, const AdamConfig& config);

struct GradStats {
  std::vector<double> sq_grad_norms;
  std::vector<double> losses;
  std::vector<double> step_sizes;
  std::vector<double> partial_sums{0.0};  // S_k, length K + 1

  std::size_t size() const { return sq_grad_norms.size(); }
  void push(double eta, double sq_grad_norm, double loss);
  double mean_sq_grad_norm() const;
};

double last_window_avg(const GradStats& stats, std::size_t window = 200);

/// step,sq_grad_norm,train_loss
std::string grad_stats_csv(const GradStats& stats);

enum class OptimizerKind { sgld, adam };

struct TrainConfig {
  OptimizerKind kind = OptimizerKind::sgld;
  SgldConfig sgld;
  AdamConfig adam;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t steps = 20000;
  std::uint64_t seed = 0;
  std::uint64_t step_offset = 0;  // first step index, for continuation runs
  double clip_norm = 0.0;         // 0 = no clipping
  double divergence_threshold = 1e6;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Called after every update with the global step index and the updated net.
using StepHook = std::function<void(std::uint64_t step, const ScoreNet& net)>;

struct TrainResult {
  ScoreNet net;
  GradStats stats;
};

/// Minibatch eps-loss training: each batch point draws one t ~ uniform over
/// the schedule times and one Gaussian noise.
TrainResult train(ScoreNet net, const Dataset& data, const NoiseSchedule& schedule, const TrainConfig& config,
                  const StepHook& hook = {});

/// (2 tau / sqrt n) sqrt((beta / 2) sum_k eta_k e^{-(a/2)(S_K - S_k)} |g_k|^2 + log(3 / delta)).
double sgld_bound_rhs(const GradStats& stats, const SgldConfig& config, double tau, double delta, std::size_t n);

/// sqrt(eta beta avg) / n.
double proxy_b(std::size_t n, double eta, double beta, double avg_sq_grad);
/// sqrt(eta beta avg) / sqrt n.
double proxy_b_sqrt_n(std::size_t n, double eta, double beta, double avg_sq_grad);

double heuristic_beta(std::size_t batch_size, double eta);

}  // namespace sgmlab
