#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "sgmlab/types.hpp"

namespace sgmlab {

// What a stream is used for. Streams with different purposes never overlap,
// so e.g. changing the backward-sampler noise leaves the dataset untouched.
enum class Purpose : std::uint64_t {
  data = 1,
  gmm_means = 2,
  forward_noise = 3,
  backward_noise = 4,
  init = 5,
  sgld = 6,
  batch = 7,
  train_time = 8,
  train_noise = 9,
  mc = 10,
  eval = 11,
  trajectory = 12,
  test_data = 13,
  reference = 14,
};

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator keyed by (seed, purpose, index).
///
/// The i-th output is a pure function of the key and i, so streams can be
/// created anywhere (one per chain, per data point, per MC cell) without
/// threading state between them. Satisfies UniformRandomBitGenerator, so the
/// standard distributions work on top of it.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, Purpose purpose, std::uint64_t index = 0)
      : key_(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(purpose) ^
                                          splitmix64(index + 0x632be59bd9b4e019ULL)))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return splitmix64(key_ ^ splitmix64(counter_));
  }

  double normal() { return normal_(*this); }
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this); }

  Vector normal_vector(Eigen::Index d) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  void fill_normal(Eigen::Ref<PointMatrix> m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal();
  }

  PointMatrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    PointMatrix m(rows, cols);
    fill_normal(m);
    return m;
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_;
};

}  // namespace sgmlab
