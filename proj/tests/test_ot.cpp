#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgmlab/ot.hpp"
#include "sgmlab/rng.hpp"

using namespace sgmlab;

TEST_SUITE("ot_eval") {
  TEST_CASE("trivial cases") {
    RngStream rng(1, Purpose::mc);
    const PointMatrix x = rng.normal_matrix(20, 3);
    CHECK(w2_exact(x, x).w2 == 0.0);
    const PointMatrix rev = x.colwise().reverse();
    CHECK(w2_exact(x, rev).w2 == 0.0);
    const PointMatrix a = rng.normal_matrix(1, 3), b = rng.normal_matrix(1, 3);
    CHECK(w2_exact(a, b).w2 == doctest::Approx((a - b).norm()).epsilon(1e-14));
    CHECK(w2_bruteforce(b, a) == doctest::Approx((a - b).norm()).epsilon(1e-14));
    CHECK_THROWS_AS(w2_exact(x, rng.normal_matrix(19, 3)), InvalidArgument);
    CHECK_THROWS_AS(w2_exact(x, x, 10), SizeError);
    CHECK_THROWS_AS(w2_bruteforce(rng.normal_matrix(9, 2), rng.normal_matrix(9, 2)), SizeError);
  }

  TEST_CASE("exact solver matches permutations") {
    RngStream rng(2, Purpose::mc);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto m = static_cast<Eigen::Index>(1 + rng.below(7));
      const auto d = static_cast<Eigen::Index>(1 + rng.below(3));
      const PointMatrix x = rng.normal_matrix(m, d), y = rng.normal_matrix(m, d);
      const double exact = w2_exact(x, y).w2;
      worst = std::max(worst, std::abs(exact - oracle::w2_permutations(x, y)));
      CHECK(std::abs(exact - w2_bruteforce(x, y)) < 1e-10);
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("exact solver matches hungarian on larger clouds") {
    RngStream rng(5, Purpose::mc);
    for (const Eigen::Index m : {64, 300, 700}) {
      const PointMatrix x = 0.5 * rng.normal_matrix(m, 2), y = 0.5 * rng.normal_matrix(m, 2);
      Eigen::MatrixXd cost(m, m);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
      const double expect = std::sqrt(oracle::assignment_hungarian(cost) / static_cast<double>(m));
      CHECK(w2_exact(x, y).w2 == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("metric properties") {
    RngStream rng(3, Purpose::mc);
    for (int trial = 0; trial < 30; ++trial) {
      const PointMatrix x = rng.normal_matrix(30, 2), y = rng.normal_matrix(30, 2), z = rng.normal_matrix(30, 2);
      const double xy = w2_exact(x, y).w2, yx = w2_exact(y, x).w2;
      CHECK(std::abs(xy - yx) < 1e-12);
      CHECK(w2_exact(x, z).w2 <= xy + w2_exact(y, z).w2 + 1e-9);
      Eigen::RowVectorXd c(2);
      c << 3.0, -1.5;
      const PointMatrix xc = x.rowwise() + c, yc = y.rowwise() + c;
      CHECK(std::abs(w2_exact(xc, yc).w2 - xy) < 1e-10);
      CHECK(std::abs(w2_exact((2.5 * x).eval(), (2.5 * y).eval()).w2 - 2.5 * xy) < 1e-10);
    }
    const auto r = w2_exact(rng.normal_matrix(500, 4), rng.normal_matrix(500, 4));
    CHECK(r.m == 500);
    CHECK(r.w2_sq == doctest::Approx(r.w2 * r.w2));
  }

  TEST_CASE("correlations") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y2, yneg;
    for (double v : x) {
      y2.push_back(2 * v);
      yneg.push_back(-v);
    }
    auto c = correlations(x, y2);
    CHECK(c.pearson == doctest::Approx(1.0));
    CHECK(c.spearman == doctest::Approx(1.0));
    c = correlations(x, yneg);
    CHECK(c.pearson == doctest::Approx(-1.0));
    CHECK(c.spearman == doctest::Approx(-1.0));
    CHECK(correlations(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}).spearman == doctest::Approx(0.5));

    const std::vector<double> tied{1, 2, 2, 3, 7, 7, 7};
    const std::vector<double> other{0.3, -1, 4, 2, 2, 9, 1};
    CHECK(correlations(tied, other).spearman == doctest::Approx(oracle::ranks_spearman(tied, other)).epsilon(1e-12));
    CHECK(average_ranks(tied) == std::vector<double>{1, 2.5, 2.5, 4, 6, 6, 6});

    CHECK_THROWS_AS(correlations(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelation);
    CHECK_THROWS_AS(correlations(std::vector<double>{1, 2}, std::vector<double>{1, 2}), InvalidArgument);
  }
}
