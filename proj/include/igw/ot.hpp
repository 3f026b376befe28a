#pragma once
/// @file ot.hpp
/// @brief Exact discrete optimal transport between equal-size uniform clouds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/coupling.hpp"
#include "igw/error.hpp"

namespace igw {

struct Assignment {
  Permutation perm;
  /// (1/n) sum_i cost(i, perm[i]), summed in row order.
  double value = 0.0;
};

/// Mean assignment cost, accumulated in row order so every caller that
/// evaluates a permutation gets bit-identical results.
inline double assignment_value(const Eigen::MatrixXd& cost, const Permutation& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += cost(static_cast<Eigen::Index>(i), perm[i]);
  return s / static_cast<double>(perm.size());
}

/// Hungarian algorithm (shortest augmenting paths with potentials), O(n^3).
/// Deterministic: rows are inserted in order and column ties resolve to the
/// smallest index.
inline Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  detail::require(cost.rows() == cost.cols() && cost.rows() >= 1, ErrorKind::invalid_argument,
                  "assignment cost must be a non-empty square matrix");
  detail::require(cost.allFinite(), ErrorKind::non_finite, "assignment cost has non-finite entries");
  const auto n = static_cast<std::size_t>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();

  // 1-based arrays; column 0 is the virtual root of each augmenting search
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.perm.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.perm[match[j] - 1] = static_cast<Eigen::Index>(j - 1);
  out.value = assignment_value(cost, out.perm);
  return out;
}

namespace detail {
inline void require_uniform_pair(const PointCloud& x, const PointCloud& y) {
  require(x.size() == y.size(), ErrorKind::unsupported_marginals,
          "clouds must have equal size (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  require(x.is_uniform() && y.is_uniform(), ErrorKind::unsupported_marginals,
          "clouds must carry uniform weights");
  require(x.dim() == y.dim(), ErrorKind::dimension_mismatch, "clouds must share the ambient dimension");
}
}  // namespace detail

struct OTResult {
  Coupling coupling;
  double value = 0.0;
};

/// Cost matrix C[i,j] = -8 x_i^T A y_j of the bilinear problem.
inline Eigen::MatrixXd bilinear_cost(const PointCloud& x, const PointCloud& y, const SquareMatrix& a) {
  detail::require(a.rows() == x.dim() && a.cols() == y.dim(), ErrorKind::dimension_mismatch,
                  "A must be d x d");
  return -8.0 * (x.points() * a * y.points().transpose());
}

/// Optimal plan for the cost c_A(x, y) = -8 x^T A y.
inline OTResult solve_ot_bilinear(const PointCloud& x, const PointCloud& y, const SquareMatrix& a) {
  detail::require_uniform_pair(x, y);
  auto sol = solve_assignment(bilinear_cost(x, y, a));
  return {Coupling::from_permutation(std::move(sol.perm)), sol.value};
}

inline Eigen::MatrixXd squared_distance_cost(const PointCloud& x, const PointCloud& y) {
  const auto& px = x.points();
  const auto& py = y.points();
  Eigen::MatrixXd c(x.size(), y.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < y.size(); ++j) c(i, j) = (px.row(i) - py.row(j)).squaredNorm();
  return c;
}

struct W2Result {
  double value = 0.0;
  Coupling coupling;
};

/// W_2 with squared Euclidean cost.
inline W2Result w2_distance(const PointCloud& x, const PointCloud& y) {
  detail::require_uniform_pair(x, y);
  auto sol = solve_assignment(squared_distance_cost(x, y));
  return {std::sqrt(std::max(sol.value, 0.0)), Coupling::from_permutation(std::move(sol.perm))};
}

}  // namespace igw
