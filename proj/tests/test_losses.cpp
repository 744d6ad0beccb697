#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sgmlab/diffusion.hpp"
#include "sgmlab/losses.hpp"

using namespace sgmlab;

namespace {

McConfig mc_with(std::size_t samples, std::uint64_t seed, bool crn = true) {
  McConfig mc;
  mc.samples = samples;
  mc.seed = seed;
  mc.common_random_numbers = crn;
  return mc;
}

ScoreField zero_field() {
  return [](double, const PointMatrix& x) { return PointMatrix(PointMatrix::Zero(x.rows(), x.cols())); };
}

ScoreField true_field(const GmmSpec& spec) {
  return [spec](double t, const PointMatrix& x) {
    return (2.0 * true_diffused_score(spec, t, x, ScoreConvention::gamma)).eval();
  };
}

ScoreField empirical_field(const Dataset& data) {
  return [data](double t, const PointMatrix& x) {
    return (2.0 * empirical_diffused_score(data, t, x, ScoreConvention::gamma)).eval();
  };
}

bool within(const Estimate& e, double target, double sigmas = 3.0) {
  return std::abs(e.value - target) <= sigmas * e.std_error + 1e-12;
}

}  // namespace

TEST_SUITE("losses_gaps") {
  TEST_CASE("mc config validation") {
    McConfig mc;
    mc.samples = 1;
    CHECK_THROWS_AS(mc.validate(), InvalidArgument);
    mc.samples = 5;
    mc.antithetic = true;
    CHECK_THROWS_AS(mc.validate(), InvalidArgument);
    mc.samples = 6;
    mc.threads = 0;
    CHECK_THROWS_AS(mc.validate(), InvalidArgument);
  }

  TEST_CASE("denoising loss") {
    Vector z(2);
    z << 0.4, -0.9;
    const auto lambda = lambda_measure(build_uniform_schedule(2.0, 10));
    ScoreField closure = [z](double t, const PointMatrix& x) {
      PointMatrix zz(x.rows(), x.cols());
      zz.rowwise() = z.transpose();
      return (2.0 * conditional_score(x, zz, t, ScoreConvention::gamma)).eval();
    };
    CHECK(denoising_loss(closure, z, lambda, mc_with(64, 1)).value == 0.0);

    const double t = 0.5;
    const auto e = denoising_loss(zero_field(), Vector::Zero(3), single_atom(t), mc_with(20000, 2));
    CHECK(e.value >= 0.0);
    CHECK(within(e, 4.0 * oracle::mehler_sq(0.0, 3, t)));
  }

  TEST_CASE("empirical risk") {
    const auto s = fixture::standard(1, 8);
    const auto net = fixture::random_net(s, 1);
    const auto field = gamma_score_field(net);
    const auto mc = mc_with(64, 3);

    Dataset one;
    one.points = s.data.points.topRows(1);
    CHECK(empirical_dsm(field, one, s.lambda, mc).value ==
          doctest::Approx(denoising_loss(field, one.points.row(0).transpose(), s.lambda, mc).value).epsilon(1e-13));

    Dataset reversed = s.data;
    reversed.points = s.data.points.colwise().reverse();
    const double a = empirical_dsm(field, s.data, s.lambda, mc).value;
    CHECK(empirical_dsm(field, reversed, s.lambda, mc).value == doctest::Approx(a).epsilon(1e-12));
    CHECK(a >= 0.0);
  }

  TEST_CASE("population risk equals empirical risk for data-independent scores") {
    const auto s = fixture::standard(0);
    const auto field = gamma_score_field(fixture::random_net(s, 2));
    std::vector<double> gaps;
    for (std::uint64_t r = 0; r < 50; ++r) {
      const auto data = sample_gmm(s.spec, 8, 1000 + r);
      gaps.push_back(gen_gap(field, data, s.spec, s.lambda, mc_with(16, r)).value);
    }
    const auto est = estimate_from(gaps);
    CHECK(within(est, 0.0));
  }

  TEST_CASE("constant offset raises the risk by its squared norm") {
    GmmSpec sym;
    sym.weights = {0.5, 0.5};
    sym.means.resize(2, 2);
    sym.means << 0.8, -0.3, -0.8, 0.3;
    sym.sigma2 = 0.05;
    const auto lambda = lambda_measure(build_uniform_schedule(2.0, 10));
    Vector c(2);
    c << 0.3, -0.2;
    ScoreField shifted = [c](double, const PointMatrix& x) {
      PointMatrix out(x.rows(), x.cols());
      out.rowwise() = c.transpose();
      return out;
    };
    const auto base = population_risk(zero_field(), sym, lambda, mc_with(8000, 4));
    const auto up = population_risk(shifted, sym, lambda, mc_with(8000, 4));
    CHECK(std::abs(up.value - base.value - c.squaredNorm()) <= 3 * combined_stderr(up, base));
  }

  TEST_CASE("explicit score matching") {
    const auto s = fixture::standard(2, 16);
    CHECK(esm_loss(empirical_field(s.data), s.data, s.lambda, mc_with(32, 1)).value == 0.0);
    Dataset one;
    one.points = s.data.points.topRows(1);
    const auto field = gamma_score_field(fixture::random_net(s, 3));
    const auto mc = mc_with(64, 5);
    CHECK(esm_loss(field, one, s.lambda, mc).value ==
          doctest::Approx(denoising_loss(field, one.points.row(0).transpose(), s.lambda, mc).value).epsilon(1e-12));
  }

  TEST_CASE("score error") {
    const auto s = fixture::standard(3);
    CHECK(score_error(true_field(s.spec), s.spec, s.lambda, mc_with(32, 1)).value == 0.0);

    // Zero field: 4 int E|grad log p~_t|^2 dlambda, atom by atom against fisher_mc.
    const double t = 0.4;
    const auto e = score_error(zero_field(), s.spec, single_atom(t), mc_with(8000, 2));
    RngStream rng(77, Purpose::mc);
    const auto f = fisher_mc(
        [&](const PointMatrix& x) { return true_diffused_score(s.spec, t, x, ScoreConvention::lebesgue); },
        [](const PointMatrix& x) { return (-x).eval(); },
        [&](std::size_t m, RngStream& r) { return sample_diffused(s.spec, t, m, r); }, 8000, rng);
    CHECK(std::abs(e.value - 4.0 * f.value) <= 3 * std::hypot(e.std_error, 4.0 * f.std_error));
  }

  TEST_CASE("c_t and c_hat") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto s = fixture::standard(seed);
      const auto ct = c_t(s.spec, s.lambda, mc_with(512, seed));
      const auto ch = c_hat(s.data, s.lambda, mc_with(512, seed));
      CHECK(ct.value >= -3 * ct.std_error);
      CHECK(ch.value >= -3 * ch.std_error);
      const auto alt = c_t_alternative(s.spec, s.lambda, mc_with(4000, seed + 10));
      const auto ct_big = c_t(s.spec, s.lambda, mc_with(4000, seed + 20));
      CHECK(std::abs(alt.value - ct_big.value) <= 3 * combined_stderr(alt, ct_big));
    }
    const auto s = fixture::standard(0);
    Dataset one;
    one.points = s.data.points.topRows(1);
    CHECK(c_hat(one, s.lambda, mc_with(64, 1)).value == 0.0);
    CHECK_THROWS_AS(c_t(s.spec, single_atom(0.0), mc_with(8, 1)), InvalidArgument);
  }

  TEST_CASE("decomposition") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = fixture::standard(seed);
      const auto field = gamma_score_field(fixture::random_net(s, seed));
      const auto r = decompose(field, s.data, s.spec, s.lambda, mc_with(256, seed));
      CHECK(std::abs(r.residual.value) <= 3 * r.residual.std_error + 1e-12);
      CHECK(std::abs(r.delta_hat.value - (r.c_hat.value - r.c_t.value)) <= 1e-12);
      CHECK(r.eps_s.value >= 0.0);
    }
    const auto s = fixture::standard(7);
    const auto oracle_run = decompose(true_field(s.spec), s.data, s.spec, s.lambda, mc_with(256, 1));
    CHECK(oracle_run.eps_s.value == 0.0);
    const double sum = oracle_run.esm.value + oracle_run.gen_gap.value + oracle_run.delta_hat.value;
    CHECK(std::abs(sum) <= 3 * oracle_run.residual.std_error + 1e-12);

    nlohmann::json j = oracle_run;
    for (const char* key : {"eps_s", "dsm", "esm", "gen_gap", "c_t", "c_hat", "delta_hat", "residual"})
      CHECK(j.contains(key));
  }

  TEST_CASE("common random numbers shrink the residual error") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = fixture::standard(seed);
      const auto field = gamma_score_field(fixture::random_net(s, seed + 50));
      const auto with = decompose(field, s.data, s.spec, s.lambda, mc_with(128, seed, true));
      const auto without = decompose(field, s.data, s.spec, s.lambda, mc_with(128, seed, false));
      wins += with.residual.std_error < without.residual.std_error;
    }
    CHECK(wins >= 4);
  }

  TEST_CASE("antithetic pairs") {
    const auto s = fixture::standard(1);
    auto mc = mc_with(256, 3);
    mc.antithetic = true;
    const auto field = gamma_score_field(fixture::random_net(s, 9));
    const auto r = decompose(field, s.data, s.spec, s.lambda, mc);
    CHECK(r.eps_s.samples == 128);
    CHECK(std::abs(r.residual.value) <= 3 * r.residual.std_error + 1e-12);
  }

  TEST_CASE("threads do not change estimates") {
    const auto s = fixture::standard(2);
    const auto field = gamma_score_field(fixture::random_net(s, 4));
    auto mc = mc_with(64, 8);
    const auto a = decompose(field, s.data, s.spec, s.lambda, mc);
    mc.threads = 3;
    const auto b = decompose(field, s.data, s.spec, s.lambda, mc);
    CHECK(a.residual.value == b.residual.value);
    CHECK(a.eps_s.value == b.eps_s.value);
  }

  TEST_CASE("epsilon loss") {
    const auto s = fixture::standard(0);
    const auto zero_net = make_net(fixture::small_arch(2, 2.0), 1);
    const auto nu = nu_measure(s.schedule);
    const auto e = epsilon_loss(zero_net, s.data, nu, mc_with(256, 1));
    CHECK(within(e, 2.0));

    const auto net = fixture::random_net(s, 5);
    for (const auto& atom : s.lambda.atoms) {
      const auto one = single_atom(atom.time);
      const auto mc = mc_with(32, 6);
      const double eps = epsilon_loss(net, s.data, one, mc).value;
      const double dsm = dsm_lebesgue_loss(net, s.data, one, mc).value;
      CHECK(std::abs(dsm - 4.0 / (1.0 - std::exp(-2.0 * atom.time)) * eps) <= 1e-10 * dsm);
      CHECK(eps >= 0.0);
    }
  }

  TEST_CASE("kl bound arithmetic") {
    const auto r = kl_bound_report(0.1, 1.0, 5.0, 2.0, 0.2);
    CHECK(r.initialization == doctest::Approx(0.018316).epsilon(1e-5));
    CHECK(r.score == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(r.discretization == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.up_to_constant);
    const auto vanish = kl_bound_report(0.0, 1.0, 5.0, 50.0, 0.0);
    CHECK(vanish.total < 1e-40);
    CHECK(kl_bound_report(0.1, 1.0, 5.0, 2.0, 0.4).discretization == 2.0 * r.discretization);
  }

  TEST_CASE("Delta_hat bound") {
    const auto lambda = lambda_measure(build_uniform_schedule(2.0, 10));
    double decay = 0.0;
    for (int k = 1; k <= 10; ++k) decay += 0.1 * std::exp(-0.4 * k);
    const double expect = 4.0 * 1.69 * std::sqrt(std::log(20.0) / 2048.0) * decay;
    CHECK(std::abs(delta_hat_hoeffding_term(1.3, 1024, 0.05, lambda) - expect) < 1e-12);

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto s = fixture::standard(seed);
      const auto r = delta_hat_bound_report(s.data, s.spec, s.lambda, 0.05, mc_with(256, seed));
      CHECK(r.holds());
      CHECK(r.margin.value == doctest::Approx(r.rhs.value - r.lhs.value).epsilon(1e-9));
    }
    const auto s = fixture::standard(0);
    Dataset origin;
    origin.points = PointMatrix::Zero(1, 2);
    const auto r = delta_hat_bound_report(origin, s.spec, s.lambda, 0.05, mc_with(64, 1));
    CHECK(std::isfinite(r.rhs.value));
    CHECK(std::isfinite(r.lhs.value));
  }

  TEST_CASE("proposition bound") {
    const double k1 = score_error_k1_sq(4, 0.2, 1.3);
    CHECK(k1 == doctest::Approx(4.0 / (1.0 - std::exp(-0.4)) + 1.69 + 4.0).epsilon(1e-14));
    CHECK(k1 == doctest::Approx(17.82).epsilon(1e-3));
    CHECK(score_error_k1_sq(4, 0.1, 1.3) > k1);
    CHECK(score_error_k1_sq(4, 0.05, 1.3) > score_error_k1_sq(4, 0.1, 1.3));

    const auto r = score_error_bound_from_parts(4, 1000, 0.2, 2.0, 1.3, 0.05, 7.0, 0.3);
    const double k2 = 1.69 + 4.0 * std::log(10.0) + 0.8;
    const double li = std::log(20.0);
    CHECK(r.k2_sq == doctest::Approx(k2).epsilon(1e-14));
    CHECK(r.concentration == doctest::Approx((1.69 + k1) * std::sqrt(li / 2000.0)).epsilon(1e-13));
    CHECK(r.fisher_summand == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(r.tail == doctest::Approx(k1 * li / 1000.0).epsilon(1e-13));
    CHECK(r.transport == doctest::Approx((0.09 + std::sqrt(k2 * 0.2) * 0.3) / 0.4).epsilon(1e-13));
    CHECK(r.total == doctest::Approx(r.concentration + r.fisher_summand + r.tail + r.transport).epsilon(1e-14));

    const auto spec = reference_gmm(0);
    const auto sched = build_uniform_schedule(2.0, 10);
    const auto small = score_error_bound_report(sample_gmm(spec, 8, 3), spec, sched, 0.05, mc_with(256, 3), 1024);
    const auto big = score_error_bound_report(sample_gmm(spec, 4096, 3), spec, sched, 0.05, mc_with(256, 3), 1024);
    CHECK(big.w < small.w);
    CHECK(small.step == doctest::Approx(0.2));
  }
}
