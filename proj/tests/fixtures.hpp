#pragma once

#include "sgmlab/gmm.hpp"
#include "sgmlab/losses.hpp"
#include "sgmlab/optim.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/score_net.hpp"

namespace fixture {

// Small configuration shared by the decomposition and bound tests:
// 3-component mixture in R^2, n = 32, uniform schedule T = 2, N = 10.
struct Standard {
  sgmlab::GmmSpec spec;
  sgmlab::Dataset data;
  sgmlab::NoiseSchedule schedule;
  sgmlab::TimeMeasure lambda;
};

inline Standard standard(std::uint64_t seed = 0, std::size_t n = 32) {
  Standard s;
  s.spec = sgmlab::gmm_with_random_means({0.5, 0.3, 0.2}, 2, 0.2, 100 + seed);
  s.data = sgmlab::sample_gmm(s.spec, n, seed);
  s.schedule = sgmlab::build_uniform_schedule(2.0, 10);
  s.lambda = sgmlab::lambda_measure(s.schedule);
  return s;
}

inline sgmlab::MlpArch small_arch(Eigen::Index d, double horizon) {
  sgmlab::MlpArch a;
  a.input_dim = d;
  a.n_blocks = 2;
  a.hidden = 16;
  a.time_embed_dim = 16;
  a.horizon = horizon;
  return a;
}

inline sgmlab::ScoreNet random_net(const Standard& s, std::uint64_t seed) {
  return sgmlab::make_net(small_arch(s.spec.dim(), s.schedule.horizon()), seed, {.zero_output = false});
}

inline sgmlab::ScoreNet trained_net(const Standard& s, std::uint64_t seed, std::uint64_t steps) {
  sgmlab::TrainConfig cfg;
  cfg.kind = sgmlab::OptimizerKind::adam;
  cfg.adam.lr = 2e-3;
  cfg.steps = steps;
  cfg.seed = seed;
  auto net = sgmlab::make_net(small_arch(s.spec.dim(), s.schedule.horizon()), seed);
  return sgmlab::train(std::move(net), s.data, s.schedule, cfg).net;
}

}  // namespace fixture

#include "sgmlab/runner.hpp"

namespace fixture {

// A run small enough for unit tests: every artifact is produced in about a second.
inline sgmlab::RunConfig tiny_run() {
  sgmlab::RunConfig c;
  c.n = 32;
  c.schedule.train_steps = 50;
  c.schedule.inference_steps = 20;
  c.arch.n_blocks = 1;
  c.arch.hidden = 8;
  c.arch.time_embed_dim = 8;
  c.train.steps = 30;
  c.train.sgld.eta = 1e-3;
  c.train.sgld.beta = 1e6;
  c.seeds = {0};
  c.mc.samples = 8;
  c.eval.draws_per_point = 2;
  c.eval.sample_m = 64;
  c.eval.trajectory_steps = 5;
  c.eval.trajectory_subset = 16;
  c.eval.grad_window = 10;
  return c;
}

}  // namespace fixture
