#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "sgmlab/optim.hpp"
#include "sgmlab/runner.hpp"

using namespace sgmlab;

namespace {

GradStats stats_from(const std::vector<double>& norms, double eta) {
  GradStats s;
  for (double g : norms) s.push(eta, g, 0.0);
  return s;
}

}  // namespace

TEST_SUITE("optimizers") {
  TEST_CASE("sgld step") {
    SgldConfig cfg;
    cfg.eta = 0.0;
    Vector p = Vector::LinSpaced(5, -1.0, 1.0);
    const Vector before = p;
    RngStream rng(1, Purpose::sgld);
    sgld_step(p, Vector::Ones(5), cfg, 0, rng);
    CHECK(p == before);

    cfg.eta = 1e-3;
    cfg.beta = 1e12;
    CHECK(std::sqrt(2.0 * cfg.eta / cfg.beta) == doctest::Approx(4.47e-8).epsilon(1e-3));

    // a = 0, zero gradient: increments are N(0, 2 eta / beta).
    cfg.beta = 1e4;
    std::vector<double> inc;
    for (int r = 0; r < 10000; ++r) {
      Vector q = Vector::Zero(1);
      RngStream step_rng(r, Purpose::sgld);
      sgld_step(q, Vector::Zero(1), cfg, 0, step_rng);
      inc.push_back(q[0]);
    }
    double var = 0.0;
    for (double v : inc) var += v * v;
    var /= static_cast<double>(inc.size());
    CHECK(std::abs(var / (2.0 * cfg.eta / cfg.beta) - 1.0) < 0.1);

    CHECK_THROWS_AS(sgld_step(p, Vector::Constant(5, NAN), cfg, 3, rng), NumericalFailure);
  }

  TEST_CASE("sgld preconditions") {
    SgldConfig cfg;
    cfg.eta = 0.5;
    cfg.a = 2.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.a = 1.0;
    cfg.beta = 8.0;
    cfg.init_std = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.beta = 2.0;
    CHECK_NOTHROW(cfg.validate());
    cfg.eta_table = {0.1, 0.2, 0.3};
    CHECK(cfg.eta_at(1) == 0.2);
    CHECK(cfg.eta_at(10) == 0.3);
    CHECK(cfg.max_eta() == 0.3);
  }

  TEST_CASE("adam step") {
    AdamConfig cfg;
    AdamState state;
    Vector p = Vector::LinSpaced(4, -1.0, 2.0);
    const Vector before = p;
    adam_step(p, Vector::Zero(4), state, cfg);
    CHECK(p == before);

    AdamState fresh;
    Vector g(4);
    g << 0.5, -2.0, 1e-3, 0.0;
    Vector q = before;
    adam_step(q, g, fresh, cfg);
    for (int i = 0; i < 4; ++i) {
      const double expect = cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
      CHECK(before[i] - q[i] == doctest::Approx(expect).epsilon(1e-9));
    }
    AdamState again;
    Vector r = before;
    adam_step(r, g, again, cfg);
    CHECK(r == q);
  }

  TEST_CASE("grad stats") {
    const auto s = stats_from({1, 2, 3, 4}, 0.1);
    CHECK(s.size() == 4);
    CHECK(last_window_avg(s, 2) == 3.5);
    CHECK(last_window_avg(s, 200) == 2.5);
    CHECK(last_window_avg(stats_from({7, 7, 7}, 0.1), 2) == 7.0);
    for (std::size_t k = 1; k < s.partial_sums.size(); ++k) CHECK(s.partial_sums[k] >= s.partial_sums[k - 1]);
    CHECK(std::abs((s.partial_sums.back() - s.partial_sums[1]) - 0.3) < 1e-12);
    CHECK(grad_stats_csv(s).rfind("step,sq_grad_norm,train_loss\n", 0) == 0);
  }

  TEST_CASE("sgld bound arithmetic") {
    SgldConfig cfg;
    cfg.eta = 0.1;
    cfg.beta = 2.0;
    const double delta = 3.0 / std::exp(1.0);
    CHECK(sgld_bound_rhs(stats_from({4.0}, 0.1), cfg, 1.0, delta, 100) ==
          doctest::Approx(0.2 * std::sqrt(1.4)).epsilon(1e-14));
    CHECK(0.2 * std::sqrt(1.4) == doctest::Approx(0.23664).epsilon(1e-4));

    cfg.beta = 1e4;
    const auto zero = stats_from({0.0, 0.0, 0.0}, 0.1);
    CHECK(sgld_bound_rhs(zero, cfg, 1.0, 0.05, 50) ==
          doctest::Approx(2.0 / std::sqrt(50.0) * std::sqrt(std::log(60.0))).epsilon(1e-14));

    const auto base = stats_from({1.0, 2.0, 3.0}, 0.01);
    const double expect = 2.0 / std::sqrt(10.0) * std::sqrt(0.5 * 1e4 * 0.01 * 6.0 + std::log(60.0));
    CHECK(sgld_bound_rhs(base, cfg, 1.0, 0.05, 10) == doctest::Approx(expect).epsilon(1e-14));
    const double b0 = sgld_bound_rhs(base, cfg, 1.0, 0.05, 10);
    CHECK(sgld_bound_rhs(stats_from({1.0, 2.5, 3.0}, 0.01), cfg, 1.0, 0.05, 10) >= b0);
    cfg.beta = 2e4;
    CHECK(sgld_bound_rhs(base, cfg, 1.0, 0.05, 10) >= b0);

    cfg.a = 1.0;
    cfg.beta = 1e4;
    const double decayed = 2.0 / std::sqrt(10.0) *
                           std::sqrt(0.5 * 1e4 * 0.01 * (std::exp(-0.015) * 1 + std::exp(-0.01) * 2 + std::exp(-0.005) * 3) + std::log(60.0));
    CHECK(sgld_bound_rhs(base, cfg, 1.0, 0.05, 10) == doctest::Approx(decayed).epsilon(1e-14));
  }

  TEST_CASE("proxies") {
    CHECK(proxy_b(10, 1e-3, 1e6, 0.0) == 0.0);
    CHECK(proxy_b(8192, 1e-3, 1e6, 4.0) == doctest::Approx(std::sqrt(4000.0) / 8192.0).epsilon(1e-14));
    CHECK(proxy_b(8192, 1e-3, 1e6, 4.0) == doctest::Approx(7.72e-3).epsilon(1e-3));
    CHECK(proxy_b(100, 1e-3, 1e6, 16.0) == doctest::Approx(2.0 * proxy_b(100, 1e-3, 1e6, 4.0)).epsilon(1e-14));
    CHECK(proxy_b_sqrt_n(100, 1e-3, 1e6, 4.0) == doctest::Approx(std::sqrt(4000.0) / 10.0).epsilon(1e-14));
    CHECK(heuristic_beta(64, 1e-4) == doctest::Approx(640000.0).epsilon(1e-14));
    CHECK(heuristic_beta(1, 1.0) == 1.0);
    CHECK(heuristic_beta(128, 1e-4) == 2.0 * heuristic_beta(64, 1e-4));
  }

  TEST_CASE("training bookkeeping") {
    const auto s = fixture::standard(0, 16);
    auto net = fixture::random_net(s, 1);
    TrainConfig cfg;
    cfg.sgld.eta = 0.0;
    cfg.steps = 10;
    const auto frozen = train(net, s.data, s.schedule, cfg);
    CHECK(frozen.net.params.values == net.params.values);
    CHECK(frozen.stats.size() == 10);

    cfg.sgld.eta = 1e-3;
    cfg.batch_size = 4;
    std::vector<std::uint64_t> seen;
    const auto a = train(net, s.data, s.schedule, cfg, [&](std::uint64_t k, const ScoreNet&) { seen.push_back(k); });
    const auto b = train(net, s.data, s.schedule, cfg);
    CHECK(a.net.params.values == b.net.params.values);
    CHECK(seen.size() == 10);
    CHECK(seen.back() == 9);

    // Two halves with a step offset reproduce one long run.
    TrainConfig first = cfg, second = cfg;
    first.steps = second.steps = 5;
    second.step_offset = 5;
    const auto half = train(net, s.data, s.schedule, first);
    const auto whole = train(half.net, s.data, s.schedule, second);
    CHECK(whole.net.params.values == a.net.params.values);

    TrainConfig bad = cfg;
    bad.sgld.eta = 1e3;
    bad.divergence_threshold = 1e-6;
    CHECK_THROWS_AS(train(net, s.data, s.schedule, bad), NumericalFailure);

    nlohmann::json j = cfg;
    const auto back = j.get<TrainConfig>();
    CHECK(back.sgld.eta == cfg.sgld.eta);
    CHECK(back.batch_size == cfg.batch_size);
  }

  TEST_CASE("large beta is gradient descent") {
    const auto spec = reference_gmm(0);
    const auto data = sample_gmm(spec, 512, 0);
    const auto sched = build_cosine_schedule(1000);
    MlpArch arch;
    arch.input_dim = 4;
    arch.horizon = sched.horizon();
    const auto net = make_net(arch, 0);
    TrainConfig cfg;
    cfg.sgld.eta = 1e-3;
    cfg.sgld.beta = 1e16;
    cfg.steps = 1;
    const auto after = train(net, data, sched, cfg);
    // Noise scales as beta^{-1/2}; at 1e16 it sits a few 1e-6 below the drift.
    const double g2 = after.stats.sq_grad_norms[0];
    const double noise_norm = std::sqrt(2.0 * cfg.sgld.eta / cfg.sgld.beta * static_cast<double>(net.params.size()));
    CHECK(noise_norm < 1e-5 * cfg.sgld.eta * std::sqrt(g2));
  }
}

TEST_SUITE("optimizers_smoke") {
  TEST_CASE("sgld smoke run lowers the eps-loss") {
    const auto spec = reference_gmm(0);
    const auto data = sample_gmm(spec, 512, 0);
    const auto sched = build_cosine_schedule(1000);
    MlpArch arch;
    arch.input_dim = 4;
    arch.horizon = sched.horizon();
    TrainConfig cfg;
    cfg.sgld.eta = 1e-3;
    cfg.sgld.beta = 1e6;
    cfg.steps = 20000;
    const auto start = make_net(arch, 0);
    const double before = eval_eps_loss(start, data, sched, 10, 1);
    const auto r = train(start, data, sched, cfg);
    const double after = eval_eps_loss(r.net, data, sched, 10, 1);
    MESSAGE("eps-loss " << before << " -> " << after);
    CHECK(before == doctest::Approx(4.0).epsilon(0.1));
    CHECK(after < 0.8 * 4.0);
  }
}
