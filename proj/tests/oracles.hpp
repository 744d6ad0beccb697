#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// E |grad log p~_{t|0}(X_t | z)|^2 averaged over z with E|z|^2 = m2.
inline double mehler_sq(double m2, int d, double t) {
  return std::exp(-2.0 * t) * (m2 + d / std::expm1(2.0 * t));
}

// I(N(m, v I) | N(0, I)) = |m|^2 + d (v - 1)^2 / v.
inline double gaussian_fisher(double m_sq, int d, double v) { return m_sq + d * (v - 1.0) * (v - 1.0) / v; }

// KL(N(m, v I) | N(0, I)).
inline double gaussian_kl(double m_sq, int d, double v) { return 0.5 * (d * v + m_sq - d - d * std::log(v)); }

// Minimum spanning tree cost by enumerating every edge subset of size K-1.
inline double mst_bruteforce(const Eigen::MatrixXd& dist) {
  const int K = static_cast<int>(dist.rows());
  if (K <= 1) return 0.0;
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) edges.emplace_back(i, j);
  const int E = static_cast<int>(edges.size());
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << E); ++mask) {
    if (__builtin_popcount(mask) != K - 1) continue;
    std::vector<int> parent(K);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); };
    double cost = 0.0;
    bool cycle = false;
    for (int e = 0; e < E && !cycle; ++e) {
      if (!(mask & (1u << e))) continue;
      const int a = find(edges[e].first), b = find(edges[e].second);
      if (a == b) cycle = true;
      parent[a] = b;
      cost += dist(edges[e].first, edges[e].second);
    }
    if (!cycle) best = std::min(best, cost);
  }
  return best;
}

// W2 between equal-size clouds by trying every permutation.
template <typename M>
double w2_permutations(const M& x, const M& y) {
  const int m = static_cast<int>(x.rows());
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < m; ++i) c += (x.row(i) - y.row(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / m);
}

// Isotropic mixture density evaluated term by term.
inline double mixture_pdf(const std::vector<double>& w, const Eigen::MatrixXd& means, double var, const Eigen::VectorXd& x) {
  const double d = static_cast<double>(x.size());
  double p = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double r2 = (x - means.row(static_cast<Eigen::Index>(j)).transpose()).squaredNorm();
    p += w[j] * std::exp(-0.5 * r2 / var) / std::pow(2.0 * M_PI * var, 0.5 * d);
  }
  return p;
}

// Central differences of f at x along every coordinate.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double pmag_two_point(double r, double rho) { return 2.0 / (1.0 + std::exp(-r * rho)); }

inline double ranks_spearman(std::vector<double> x, std::vector<double> y) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double u : v) {
        less += u < v[i];
        equal += u == v[i];
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = rank(x), ry = rank(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// O(n^3) Hungarian method with row/column potentials. Returns the minimum total cost.
inline double assignment_hungarian(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += a(p[j] - 1, j - 1);
  return total;
}

}  // namespace oracle
