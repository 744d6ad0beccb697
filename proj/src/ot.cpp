#include "sgmlab/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace sgmlab {

void to_json(nlohmann::json& j, const W2Result& r) {
  j = {{"m", r.m}, {"d", r.d}, {"w2", r.w2}, {"w2_sq", r.w2_sq}, {"solver_iterations", r.solver_iterations}};
}

std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost, std::size_t* iterations) {
  using Index = Eigen::Index;
  const Index n = cost.rows();
  if (cost.cols() != n) throw InvalidArgument("solve_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw InvalidArgument("solve_assignment: non-finite cost");
  std::vector<Index> rowsol(static_cast<std::size_t>(n), -1), colsol(static_cast<std::size_t>(n), -1);
  if (n == 0) return rowsol;
  constexpr double big = std::numeric_limits<double>::max();
  // Everything after column reduction scans rows.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> by_row = cost;
  auto c = [&](Index i, Index j) { return by_row(i, j); };
  std::vector<double> v(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
  std::vector<Index> free_rows(static_cast<std::size_t>(n)), collist(static_cast<std::size_t>(n)),
      pred(static_cast<std::size_t>(n));
  std::vector<int> matches(static_cast<std::size_t>(n), 0);
  auto at = [](auto& vec, Index k) -> auto& { return vec[static_cast<std::size_t>(k)]; };

  // Column reduction.
  for (Index j = n - 1; j >= 0; --j) {
    Index imin = 0;
    double mn = cost(0, j);
    for (Index i = 1; i < n; ++i)
      if (cost(i, j) < mn) {
        mn = cost(i, j);
        imin = i;
      }
    at(v, j) = mn;
    if (++at(matches, imin) == 1) {
      at(rowsol, imin) = j;
      at(colsol, j) = imin;
    } else if (at(v, j) < at(v, at(rowsol, imin))) {
      const Index j1 = at(rowsol, imin);
      at(rowsol, imin) = j;
      at(colsol, j) = imin;
      at(colsol, j1) = -1;
    } else {
      at(colsol, j) = -1;
    }
  }

  // Reduction transfer.
  Index numfree = 0;
  for (Index i = 0; i < n; ++i) {
    if (at(matches, i) == 0) {
      at(free_rows, numfree++) = i;
    } else if (at(matches, i) == 1) {
      const Index j1 = at(rowsol, i);
      double mn = big;
      for (Index j = 0; j < n; ++j)
        if (j != j1 && c(i, j) - at(v, j) < mn) mn = c(i, j) - at(v, j);
      if (mn < big) at(v, j1) -= mn;
    }
  }

  // Augmenting row reduction, two passes. On continuous costs the price
  // updates can shrink geometrically and bounce rows back and forth for a
  // very long time, so each pass is capped and leftovers go to the
  // shortest-path phase.
  for (int pass = 0; pass < 2; ++pass) {
    Index k = 0;
    const Index prev_free = numfree;
    numfree = 0;
    Index budget = 8 * n;
    while (k < prev_free) {
      if (budget-- == 0) {
        while (k < prev_free) at(free_rows, numfree++) = at(free_rows, k++);
        break;
      }
      const Index i = at(free_rows, k++);
      double umin = c(i, 0) - at(v, 0);
      Index j1 = 0, j2 = 0;
      double usubmin = big;
      for (Index j = 1; j < n; ++j) {
        const double h = c(i, j) - at(v, j);
        if (h < usubmin) {
          if (h >= umin) {
            usubmin = h;
            j2 = j;
          } else {
            usubmin = umin;
            umin = h;
            j2 = j1;
            j1 = j;
          }
        }
      }
      Index i0 = at(colsol, j1);
      if (umin < usubmin) {
        at(v, j1) -= usubmin - umin;
      } else if (i0 > -1) {
        j1 = j2;
        i0 = at(colsol, j2);
      }
      at(rowsol, i) = j1;
      at(colsol, j1) = i;
      if (i0 > -1) {
        if (umin < usubmin)
          at(free_rows, --k) = i0;
        else
          at(free_rows, numfree++) = i0;
      }
    }
  }

  // Shortest augmenting paths for the remaining free rows.
  for (Index f = 0; f < numfree; ++f) {
    const Index freerow = at(free_rows, f);
    for (Index j = 0; j < n; ++j) {
      at(d, j) = c(freerow, j) - at(v, j);
      at(pred, j) = freerow;
      at(collist, j) = j;
    }
    Index low = 0, up = 0, last = 0, endofpath = -1;
    double mn = 0.0;
    bool found = false;
    do {
      if (up == low) {
        last = low - 1;
        mn = at(d, at(collist, up++));
        for (Index k = up; k < n; ++k) {
          const Index j = at(collist, k);
          const double h = at(d, j);
          if (h <= mn) {
            if (h < mn) {
              up = low;
              mn = h;
            }
            at(collist, k) = at(collist, up);
            at(collist, up++) = j;
          }
        }
        for (Index k = low; k < up; ++k)
          if (at(colsol, at(collist, k)) < 0) {
            endofpath = at(collist, k);
            found = true;
            break;
          }
      }
      if (!found) {
        const Index j1 = at(collist, low++);
        const Index i = at(colsol, j1);
        const double h = c(i, j1) - at(v, j1) - mn;
        for (Index k = up; k < n; ++k) {
          const Index j = at(collist, k);
          const double v2 = c(i, j) - at(v, j) - h;
          if (v2 < at(d, j)) {
            at(pred, j) = i;
            if (v2 == mn) {
              if (at(colsol, j) < 0) {
                endofpath = j;
                found = true;
                break;
              }
              at(collist, k) = at(collist, up);
              at(collist, up++) = j;
            }
            at(d, j) = v2;
          }
        }
      }
    } while (!found);

    for (Index k = 0; k <= last; ++k) {
      const Index j1 = at(collist, k);
      at(v, j1) += at(d, j1) - mn;
    }
    Index i;
    do {
      i = at(pred, endofpath);
      at(colsol, endofpath) = i;
      const Index j1 = endofpath;
      endofpath = at(rowsol, i);
      at(rowsol, i) = j1;
    } while (i != freerow);
  }
  if (iterations) *iterations = static_cast<std::size_t>(numfree);
  return rowsol;
}

namespace {

Eigen::MatrixXd squared_distances(const PointMatrix& x, const PointMatrix& y) {
  Eigen::MatrixXd cost(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  return cost;
}

void check_clouds(const PointMatrix& x, const PointMatrix& y) {
  if (x.rows() != y.rows()) throw InvalidArgument("w2: clouds must have equal size");
  if (x.cols() != y.cols()) throw InvalidArgument("w2: clouds must have equal dimension");
  if (x.rows() < 1) throw InvalidArgument("w2: empty cloud");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("w2: non-finite point");
}

}  // namespace

W2Result w2_exact(const PointMatrix& x, const PointMatrix& y, std::size_t cap) {
  check_clouds(x, y);
  if (static_cast<std::size_t>(x.rows()) > cap)
    throw SizeError("w2_exact: cloud size " + std::to_string(x.rows()) + " exceeds cap " + std::to_string(cap));
  const Eigen::MatrixXd cost = squared_distances(x, y);
  W2Result r;
  r.m = static_cast<std::size_t>(x.rows());
  r.d = static_cast<std::size_t>(x.cols());
  const auto assignment = solve_assignment(cost, &r.solver_iterations);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += cost(i, assignment[static_cast<std::size_t>(i)]);
  r.w2_sq = total / static_cast<double>(x.rows());
  r.w2 = std::sqrt(r.w2_sq);
  return r;
}

double w2_bruteforce(const PointMatrix& x, const PointMatrix& y) {
  check_clouds(x, y);
  if (x.rows() > 8) throw SizeError("w2_bruteforce: at most 8 points");
  const Eigen::MatrixXd cost = squared_distances(x, y);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(x.rows()));
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("correlation undefined: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlations correlations(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("correlations: length mismatch");
  if (xs.size() < 3) throw InvalidArgument("correlations: need at least 3 points");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return {pearson(xs, ys), pearson(rx, ry)};
}

}  // namespace sgmlab
