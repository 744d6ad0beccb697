#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace sgmlab {

using Vector = Eigen::VectorXd;
// One point per row; this is also the on-disk layout of sample clouds.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ScoreConvention { lebesgue, gamma };

// A vector field evaluated on a batch of points that share one diffusion time.
// Row i of the result belongs to row i of the input.
using ScoreField = std::function<PointMatrix(double t, const PointMatrix& x)>;

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, long step = -1)
      : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NearSingularTime : public NumericalFailure {
 public:
  explicit NearSingularTime(const std::string& what) : NumericalFailure(what) {}
};

class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class MagnitudeUndefined : public NumericalFailure {
 public:
  explicit MagnitudeUndefined(const std::string& what) : NumericalFailure(what) {}
};

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

}  // namespace sgmlab
