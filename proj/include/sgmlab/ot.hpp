#pragma once

#include <cstddef>
#include <span>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/types.hpp"

namespace sgmlab {

struct W2Result {
  double w2 = 0.0;
  double w2_sq = 0.0;
  std::size_t m = 0;
  std::size_t d = 0;
  std::size_t solver_iterations = 0;  // augmenting paths searched
};

void to_json(nlohmann::json& j, const W2Result& r);

inline constexpr std::size_t kDefaultW2Cap = 4096;

/// Exact W2 between two equal-size, equal-weight clouds: the optimal
/// assignment under squared Euclidean cost (Jonker-Volgenant).
W2Result w2_exact(const PointMatrix& x, const PointMatrix& y, std::size_t cap = kDefaultW2Cap);

/// Minimum over all m! matchings. Test oracle, m <= 8.
double w2_bruteforce(const PointMatrix& x, const PointMatrix& y);

/// Solves the dense square assignment problem min sum_i cost(i, row_to_col[i]).
/// Returns the column assigned to each row.
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost, std::size_t* iterations = nullptr);

struct Correlations {
  double pearson = 0.0;
  double spearman = 0.0;
};

/// Product-moment and rank correlations; ties get average ranks.
/// Throws UndefinedCorrelation when either input has zero variance.
Correlations correlations(std::span<const double> xs, std::span<const double> ys);

/// Average ranks (1-based).
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace sgmlab
