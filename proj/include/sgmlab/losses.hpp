#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/estimate.hpp"
#include "sgmlab/gmm.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/score_net.hpp"
#include "sgmlab/types.hpp"

namespace sgmlab {

/// Monte Carlo budget for the lambda-integrated functionals. Every atom of the
/// time measure is visited; `samples` forward draws are taken per (source
/// point, atom). Replicate m of every functional uses draw m of every cell, so
/// the replicates are i.i.d. and the reported standard error is exact.
struct McConfig {
  std::size_t samples = 256;
  std::uint64_t seed = 0;
  // Shared forward noise (and population data points) across functionals and
  // source points. Off: every functional and point draws its own noise.
  bool common_random_numbers = true;
  // Pairs g with -g; replicates are pair averages. Requires even `samples`.
  bool antithetic = false;
  // Atoms are evaluated in parallel and summed in atom order, so results do
  // not depend on the thread count. Score fields must be safe to call
  // concurrently.
  int threads = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const McConfig& mc);

/// ell(theta, z): E |s(t, X_t^z) - 2 grad log p~_{t|0}(X_t^z | z)|^2 integrated against the measure.
/// `score` returns s in the gamma convention with the factor 2.
Estimate denoising_loss(const ScoreField& score, const Vector& z, const TimeMeasure& measure, const McConfig& mc);

/// Mean of the denoising loss over the data set (the empirical risk).
Estimate empirical_dsm(const ScoreField& score, const Dataset& data, const TimeMeasure& measure, const McConfig& mc);

/// Denoising loss averaged over fresh z ~ mu.
Estimate population_risk(const ScoreField& score, const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc);

/// population_risk - empirical_dsm, estimated from paired replicates.
Estimate gen_gap(const ScoreField& score, const Dataset& data, const GmmSpec& spec, const TimeMeasure& measure,
                 const McConfig& mc);

/// Explicit score matching against the empirical diffused score.
Estimate esm_loss(const ScoreField& score, const Dataset& data, const TimeMeasure& measure, const McConfig& mc);

/// Score error against the true diffused score.
Estimate score_error(const ScoreField& score, const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc);

/// 4 E |grad log p~_t - grad log p~_{t|0}|^2 under mu x measure.
Estimate c_t(const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc);
/// Same quantity through the difference of squared norms (always shares draws).
Estimate c_t_alternative(const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc);
/// Empirical counterpart: conditional score vs empirical diffused score.
Estimate c_hat(const Dataset& data, const TimeMeasure& measure, const McConfig& mc);

struct DecompositionReport {
  Estimate eps_s, dsm, esm, gen_gap, population, c_t, c_hat, delta_hat;
  // eps_s - (esm + gen_gap + delta_hat), from per-replicate residuals.
  Estimate residual;
  McConfig mc;
};

void to_json(nlohmann::json& j, const DecompositionReport& r);

DecompositionReport decompose(const ScoreField& score, const Dataset& data, const GmmSpec& spec,
                              const TimeMeasure& measure, const McConfig& mc);

/// (1/n) sum_i int E |eps(t, X_t^{Z_i}) - G_t|^2 dnu(t).
Estimate epsilon_loss(const ScoreNet& net, const Dataset& data, const TimeMeasure& nu, const McConfig& mc);

/// Denoising loss with Lebesgue target: |s_theta - 2 grad log p_{t|0}|^2 with
/// s_theta = -2 eps / sqrt(1 - alpha). Draws are those of epsilon_loss.
Estimate dsm_lebesgue_loss(const ScoreNet& net, const Dataset& data, const TimeMeasure& measure, const McConfig& mc);

struct KlBoundReport {
  double initialization = 0.0;  // e^{-2T} KL(mu | gamma)
  double score = 0.0;           // T eps_s
  double discretization = 0.0;  // h I(mu | gamma)
  double total = 0.0;
  bool up_to_constant = true;
};

void to_json(nlohmann::json& j, const KlBoundReport& r);

KlBoundReport kl_bound_report(double eps_s, double kl_mu_gamma, double fisher_mu_gamma, double horizon, double step);

struct DeltaHatBoundReport {
  Estimate lhs;             // Delta_hat = C_hat - C_T
  double hoeffding = 0.0;   // 4 D^2 sqrt(log(1/delta) / 2n) int e^{-2t} dlambda
  Estimate fisher_term;     // 4 int (J(p_t | gamma) - J(p_t^n | gamma)) dlambda
  Estimate rhs;             // hoeffding + fisher_term
  Estimate margin;          // rhs - lhs from paired replicates
  double support_radius = 0.0;
  double delta = 0.05;
  bool holds(double n_sigma = 3.0) const { return margin.value >= -n_sigma * margin.std_error; }
};

void to_json(nlohmann::json& j, const DeltaHatBoundReport& r);

double delta_hat_hoeffding_term(double support_radius, std::size_t n, double delta, const TimeMeasure& measure);

DeltaHatBoundReport delta_hat_bound_report(const Dataset& data, const GmmSpec& spec, const TimeMeasure& measure, double delta,
                             const McConfig& mc);

struct ScoreErrorBoundReport {
  double k1_sq = 0.0, k2_sq = 0.0;
  double w = 0.0;  // W2 between samples of p_{h/2} and p^n_{h/2}
  Estimate fisher_mu_gamma;
  double concentration = 0.0;  // (D^2 + K1^2) sqrt(log(1/delta) / 2n)
  double fisher_summand = 0.0; // (h / T) I(mu | gamma)
  double tail = 0.0;           // K1^2 log(1/delta) / n
  double transport = 0.0;      // (W^2 + K2 sqrt(h) W) / (T h)
  double total = 0.0;
  double step = 0.0, horizon = 0.0, support_radius = 0.0;
  std::size_t w_samples = 0;
  bool up_to_constant = true;
};

void to_json(nlohmann::json& j, const ScoreErrorBoundReport& r);

double score_error_k1_sq(Eigen::Index d, double h, double support_radius);
double score_error_k2_sq(Eigen::Index d, double h, double horizon, double support_radius);
ScoreErrorBoundReport score_error_bound_from_parts(Eigen::Index d, std::size_t n, double h, double horizon, double support_radius,
                               double delta, double fisher_mu_gamma, double w);

/// h is T / N (the constant step for uniform schedules).
ScoreErrorBoundReport score_error_bound_report(const Dataset& data, const GmmSpec& spec, const NoiseSchedule& schedule, double delta,
                           const McConfig& mc, std::size_t w_samples = 1024);

/// Fisher information of mu relative to gamma^d (score at t = 0).
Estimate fisher_mu_gamma(const GmmSpec& spec, std::size_t samples, std::uint64_t seed);

}  // namespace sgmlab
