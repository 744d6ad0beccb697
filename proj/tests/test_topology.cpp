#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sgmlab/topology.hpp"

using namespace sgmlab;

namespace {

DistanceMatrix random_metric(int k, RngStream& rng, Eigen::Index dims = 3) {
  LossMatrix l(k, dims);
  for (int i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < dims; ++j) l(i, j) = rng.uniform();
  return pseudometric_matrix(l);
}

DistanceMatrix permuted(const DistanceMatrix& d, const std::vector<int>& p) {
  DistanceMatrix out(d.rows(), d.cols());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) out(i, j) = d(p[i], p[j]);
  return out;
}

}  // namespace

TEST_SUITE("trajectory_topology") {
  TEST_CASE("pseudometric") {
    LossMatrix l(3, 2);
    l << 0, 0, 2, 4, 0, 0;
    const auto d = pseudometric_matrix(l);
    CHECK(d(0, 1) == 3.0);
    CHECK(d(0, 2) == 0.0);
    CHECK(d.diagonal().cwiseAbs().maxCoeff() == 0.0);

    RngStream rng(1, Purpose::mc);
    LossMatrix big(40, 25);
    for (Eigen::Index i = 0; i < big.rows(); ++i)
      for (Eigen::Index j = 0; j < big.cols(); ++j) big(i, j) = rng.normal();
    const auto m = pseudometric_matrix(big);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(pseudometric_matrix(big, 3) == m);
    for (int trial = 0; trial < 500; ++trial) {
      const auto a = rng.below(40), b = rng.below(40), c = rng.below(40);
      CHECK(m(a, c) <= m(a, b) + m(b, c) + 1e-9);
    }
  }

  TEST_CASE("minimum spanning tree") {
    CHECK(mst_lifetime_sum(DistanceMatrix::Zero(1, 1)) == 0.0);
    DistanceMatrix tri(3, 3);
    tri << 0, 1, 2, 1, 0, 3, 2, 3, 0;
    CHECK(mst_lifetime_sum(tri) == 3.0);

    RngStream rng(2, Purpose::mc);
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 1 + static_cast<int>(rng.below(6));
      const auto d = random_metric(k, rng);
      CHECK(std::abs(mst_lifetime_sum(d) - oracle::mst_bruteforce(d)) <= 1e-12);
    }
  }

  TEST_CASE("positive magnitude") {
    CHECK(positive_magnitude(DistanceMatrix::Zero(1, 1), 3.0) == 1.0);
    double worst = 0.0;
    for (double r : {0.01, 0.1, 1.0, 8.0, 64.0})
      for (double rho : {1e-3, 0.1, 1.0, 5.0}) {
        DistanceMatrix d(2, 2);
        d << 0, rho, rho, 0;
        worst = std::max(worst, std::abs(positive_magnitude(d, r) - oracle::pmag_two_point(r, rho)));
      }
    CHECK(worst < 1e-10);

    RngStream rng(3, Purpose::mc);
    LossMatrix l(6, 4);
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) l(i, j) = rng.uniform();
    LossMatrix dup(9, 4);
    dup << l, l.topRows(3);
    const auto base = positive_magnitude_report(pseudometric_matrix(l), 2.0);
    const auto with_dups = positive_magnitude_report(pseudometric_matrix(dup), 2.0);
    CHECK(with_dups.points == 6);
    CHECK(std::abs(base.value - with_dups.value) < 1e-10);
    CHECK(mst_lifetime_sum(pseudometric_matrix(dup)) == doctest::Approx(mst_lifetime_sum(pseudometric_matrix(l))));
    CHECK(base.condition_number >= 1.0);
    CHECK_THROWS(positive_magnitude(DistanceMatrix::Zero(1, 1), 0.0));
  }

  TEST_CASE("permutation equivariance") {
    RngStream rng(4, Purpose::mc);
    const auto d = random_metric(12, rng);
    std::vector<int> p(12);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    const auto q = permuted(d, p);
    CHECK(std::abs(mst_lifetime_sum(q) - mst_lifetime_sum(d)) < 1e-10);
    CHECK(std::abs(positive_magnitude(q, 5.0) - positive_magnitude(d, 5.0)) < 1e-10);
  }

  TEST_CASE("bound expressions") {
    BoundParams p;
    p.loss_bound = 1.0;
    p.delta = std::exp(-1.0);
    p.r = 1.0;
    CHECK(topology_bound_rhs(1.0, p, 100, TopologyBound::magnitude) == doctest::Approx(0.31).epsilon(1e-14));
    p.loss_bound = 2.0;
    p.delta = 0.05;
    CHECK(topology_bound_rhs(0.0, p, 50, TopologyBound::lifetime) ==
          doctest::Approx(2.0 * std::sqrt((1.0 + std::log(20.0)) / 50.0)).epsilon(1e-14));
    double prev = 0.0;
    for (double e1 : {0.0, 0.1, 1.0, 10.0, 1e3}) {
      const double v = topology_bound_rhs(e1, p, 50, TopologyBound::lifetime);
      CHECK(v >= prev);
      prev = v;
    }
    BoundParams bad;
    bad.delta = 1.5;
    CHECK_THROWS(bad.validate());

    const auto s = standard_scales(4096);
    CHECK(s == std::vector<double>{64.0, 0.01});
    CHECK(standard_scales(1) == std::vector<double>{1.0, 0.01});
  }

  TEST_CASE("magnitude bound minimization") {
    RngStream rng(5, Purpose::mc);
    const auto d = random_metric(20, rng);
    BoundParams p;
    const auto m = magnitude_bound_minimized(d, p, 512, 0.1, 100.0, 25);
    for (double r : {0.1, 1.0, 10.0, 100.0}) {
      BoundParams q = p;
      q.r = r;
      CHECK(m.value <= topology_bound_rhs(positive_magnitude(d, r), q, 512, TopologyBound::magnitude) + 1e-12);
    }
  }

  TEST_CASE("single iterate report") {
    const DistanceMatrix one = DistanceMatrix::Zero(1, 1);
    const std::vector<double> scales{32.0, 0.01};
    const auto r = topology_report(one, scales, BoundParams{}, 1024);
    CHECK(r.e1 == 0.0);
    CHECK(r.pmag.at(32.0).value == 1.0);
    nlohmann::json j = r;
    CHECK(j.contains("E1"));
    CHECK(j.contains("condition_number"));
    CHECK(j["bounds"].contains("lifetime_bound"));
  }

  TEST_CASE("trajectory recording") {
    const auto s = fixture::standard(0, 24);
    const auto net = fixture::random_net(s, 2);
    TrainConfig cont;
    cont.sgld.eta = 1e-3;
    cont.steps = 6;
    cont.step_offset = 100;
    const auto rec = record_trajectory(net, s.data, s.schedule, cont, {.max_subset = 10, .seed = 3});
    CHECK(rec.iterates() == 7);
    CHECK(rec.losses.cols() == 10);
    CHECK(rec.k0 == 100);
    CHECK(rec.k1 == 106);
    const auto again = record_trajectory(net, s.data, s.schedule, cont, {.max_subset = 10, .seed = 3});
    CHECK(again.losses == rec.losses);

    TrainConfig frozen = cont;
    frozen.sgld.eta = 0.0;
    const auto flat = record_trajectory(net, s.data, s.schedule, frozen, {.max_subset = 50, .seed = 3});
    CHECK(flat.losses.cols() == 24);
    CHECK(flat.losses.row(0) == flat.losses.row(3));
    CHECK(mst_lifetime_sum(pseudometric_matrix(flat)) == 0.0);

    const auto path = std::filesystem::temp_directory_path() / "sgmlab_test_traj.bin";
    save_trajectory(path, rec);
    const auto back = load_trajectory(path);
    CHECK(back.losses == rec.losses);
    CHECK(back.times == rec.times);
    CHECK(back.subset == rec.subset);
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
  }
}
