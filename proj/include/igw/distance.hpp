#pragma once
/// @file distance.hpp
/// @brief Inner-product Gromov-Wasserstein distance: primal objective,
/// brute-force oracle, alternating dual solver, PSD rotation, Gromov-Monge
/// maps and Wasserstein comparison bounds.
///
/// With uncentered second moments S_x, S_y and C = sum_ij pi_ij x_i y_j^T,
///
///   IGW^2(pi) = |S_x|_F^2 + |S_y|_F^2 - 2 |C|_F^2
///             = F1 + min_A { 8|A|_F^2 - 8<A, C> },   A* = C/2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/coupling.hpp"
#include "igw/error.hpp"
#include "igw/linalg.hpp"
#include "igw/ot.hpp"

namespace igw {

inline constexpr Eigen::Index kMaxBruteforceSize = 9;
inline constexpr Eigen::Index kMaxStableGramSize = 4000;

struct IGWResult {
  double igw_squared = 0.0;
  Coupling coupling = Coupling::identity(1);
  SquareMatrix dual_A;
  /// O aligning the second cloud; identity unless a rotation was requested.
  SquareMatrix rotation;
  int iterations = 0;
  bool converged = false;
  /// Restart that produced this result (alternating solver only).
  int restart = 0;
  /// Dual objective 8|A_k|^2 + IOT_{A_k} per iteration of the chosen restart.
  std::vector<double> dual_history;

  double igw() const { return std::sqrt(std::max(igw_squared, 0.0)); }
};

struct IGWOptions {
  int max_iters = 200;
  double tol = 1e-10;
  int restarts = 8;
  std::uint64_t seed = 0;
  bool compute_rotation = false;
  /// After each alternating run, try pairwise swaps of the permutation that
  /// increase |C|_F and resume alternating from the improved plan.
  bool swap_polish = true;
};

/// |S_x|_F^2 + |S_y|_F^2.
inline double igw_f1(const PointCloud& x, const PointCloud& y) {
  return covariance(x).squaredNorm() + covariance(y).squaredNorm();
}

/// Primal objective under a fixed plan, clamped to 0 when round-off makes it
/// slightly negative.
inline double igw_objective(const PointCloud& x, const PointCloud& y, const Coupling& plan) {
  const SquareMatrix c = cross_covariance(x, y, plan);
  const double f1 = igw_f1(x, y);
  const double v = f1 - 2.0 * c.squaredNorm();
  // Near zero the expansion is pure cancellation; for permutation plans the
  // Gram-difference sum is exact to round-off in the small differences.
  if (plan.is_permutation() && v < 1e-6 * f1 && x.size() <= kMaxStableGramSize) {
    const auto& p = plan.permutation();
    const Eigen::Index n = x.size();
    Eigen::MatrixXd yp(n, y.dim());
    for (Eigen::Index i = 0; i < n; ++i) yp.row(i) = y.points().row(p[i]);
    const Eigen::MatrixXd diff = x.points() * x.points().transpose() - yp * yp.transpose();
    return diff.squaredNorm() / static_cast<double>(n * n);
  }
  return (v < 0.0 && v >= -1e-12) ? 0.0 : v;
}

/// 8|A|_F^2 + min_pi int c_A dpi.
inline double dual_objective(const PointCloud& x, const PointCloud& y, const SquareMatrix& a) {
  return 8.0 * a.squaredNorm() + solve_ot_bilinear(x, y, a).value;
}

/// O = P Q^T from the SVD P L Q^T of the plan's cross-covariance; the
/// cross-covariance of (x, O_# y) under the same plan is then P L P^T.
inline SquareMatrix psd_rotation(const PointCloud& x, const PointCloud& y, const Coupling& plan) {
  const SquareMatrix c = cross_covariance(x, y, plan);
  detail::require(c.allFinite(), ErrorKind::non_finite, "cross-covariance is not finite");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

namespace detail {

inline IGWResult finish_result(const PointCloud& x, const PointCloud& y, Coupling plan, bool rotation) {
  IGWResult r;
  r.dual_A = 0.5 * cross_covariance(x, y, plan);
  r.igw_squared = igw_objective(x, y, plan);
  r.rotation = rotation ? psd_rotation(x, y, plan) : SquareMatrix::Identity(x.dim(), x.dim());
  r.coupling = std::move(plan);
  return r;
}

}  // namespace detail

/// Exact IGW^2 by enumerating all n! permutations (n <= 9).
inline IGWResult igw_bruteforce(const PointCloud& x, const PointCloud& y, bool compute_rotation = false) {
  detail::require_uniform_pair(x, y);
  const Eigen::Index n = x.size();
  const Eigen::Index d = x.dim();
  detail::require(n <= kMaxBruteforceSize, ErrorKind::size_guard,
                  "brute force limited to n <= " + std::to_string(kMaxBruteforceSize) + ", got n = " +
                      std::to_string(n));
  // outer[i*n+j] = x_i y_j^T; the plan weight 1/n is a common factor
  std::vector<Eigen::MatrixXd> outer(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      outer[i * n + j] = x.points().row(i).transpose() * y.points().row(j);

  Permutation perm = identity_permutation(n);
  Permutation best = perm;
  double best_norm = -1.0;
  Eigen::MatrixXd c(d, d);
  do {
    c.setZero();
    for (Eigen::Index i = 0; i < n; ++i) c += outer[i * n + perm[i]];
    const double norm = c.squaredNorm();
    if (norm > best_norm * (1.0 + 1e-14) + 1e-300) {
      best_norm = norm;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  auto r = detail::finish_result(x, y, Coupling::from_permutation(std::move(best)), compute_rotation);
  r.converged = true;
  return r;
}

/// Seeded initial plans: restart 0 is the W2-optimal coupling, later restarts
/// the W2 coupling against random orthogonal images of y, with det -1 on odd
/// restarts and +1 on even ones so both components of O(d) are probed.
inline std::vector<Coupling> alternating_initial_plans(const PointCloud& x, const PointCloud& y, int restarts,
                                                       std::uint64_t seed) {
  std::vector<Coupling> plans;
  plans.push_back(w2_distance(x, y).coupling);
  std::mt19937_64 rng(seed);
  for (int k = 1; k < restarts; ++k) {
    const SquareMatrix r = random_orthogonal(x.dim(), rng, k % 2 ? -1 : +1);
    plans.push_back(w2_distance(x, apply_linear(y, r)).coupling);
  }
  return plans;
}

namespace detail {

/// Best-improvement pairwise swaps of a permutation plan that increase |C|_F^2
/// (equivalently decrease IGW^2). Swapping i and j changes C by
/// (x_i - x_j)(y_{p(j)} - y_{p(i)})^T / n.
inline bool swap_polish(const PointCloud& x, const PointCloud& y, Permutation& p) {
  const Eigen::Index n = x.size();
  const auto& px = x.points();
  const auto& py = y.points();
  const double inv_n = 1.0 / static_cast<double>(n);
  bool improved = false;
  SquareMatrix c = SquareMatrix::Zero(x.dim(), x.dim());
  for (Eigen::Index i = 0; i < n; ++i) c += px.row(i).transpose() * py.row(p[i]);
  c *= inv_n;
  while (true) {
    double best = c.squaredNorm();
    const double base = best;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = (c + inv_n * (px.row(i) - px.row(j)).transpose() * (py.row(p[j]) - py.row(p[i])))
                             .squaredNorm();
        if (v > best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    if (bi < 0 || best <= base * (1.0 + 1e-13)) return improved;
    c += inv_n * (px.row(bi) - px.row(bj)).transpose() * (py.row(p[bj]) - py.row(p[bi]));
    std::swap(p[bi], p[bj]);
    improved = true;
  }
}

}  // namespace detail

/// Block-coordinate descent on the dual: pi <- argmin IOT_A, A <- C(pi)/2.
/// Each half step is an exact minimization, so the dual objective never
/// increases; the optional swap polish only lowers it further. Returns the
/// best of opts.restarts runs, ties going to the lower restart index.
inline IGWResult igw_alternating(const PointCloud& x, const PointCloud& y, const IGWOptions& opts = {}) {
  detail::require_uniform_pair(x, y);
  detail::require(opts.restarts >= 1 && opts.max_iters >= 1, ErrorKind::invalid_argument,
                  "restarts and max_iters must be positive");

  const auto inits = alternating_initial_plans(x, y, opts.restarts, opts.seed);
  IGWResult best;
  bool have_best = false;
  for (int k = 0; k < opts.restarts; ++k) {
    SquareMatrix a = 0.5 * cross_covariance(x, y, inits[k]);
    Coupling plan = inits[k];
    std::vector<double> history;
    bool converged = false;
    int it = 0;
    while (it < opts.max_iters) {
      ++it;
      auto ot = solve_ot_bilinear(x, y, a);
      const double dual = 8.0 * a.squaredNorm() + ot.value;
      plan = std::move(ot.coupling);
      const SquareMatrix next = 0.5 * cross_covariance(x, y, plan);
      const bool small_step = (next - a).norm() < opts.tol;
      const bool flat = !history.empty() && std::abs(history.back() - dual) < 1e-12;
      history.push_back(dual);
      a = next;
      if (small_step || flat) {
        Permutation perm = plan.permutation();
        if (opts.swap_polish && detail::swap_polish(x, y, perm)) {
          plan = Coupling::from_permutation(std::move(perm));
          a = 0.5 * cross_covariance(x, y, plan);
          continue;
        }
        converged = true;
        break;
      }
    }
    auto r = detail::finish_result(x, y, std::move(plan), false);
    r.iterations = it;
    r.converged = converged;
    r.restart = k;
    r.dual_history = std::move(history);
    if (!have_best || r.igw_squared < best.igw_squared) {
      best = std::move(r);
      have_best = true;
    }
  }
  if (opts.compute_rotation) best.rotation = psd_rotation(x, y, best.coupling);
  else best.rotation = SquareMatrix::Identity(x.dim(), x.dim());
  return best;
}

struct GromovMongeMap {
  Permutation perm;
  SquareMatrix dual_A;
};

/// T* = (8A*)^{-1} o T, T the Brenier map from x to (8A*)_# y. On equal-size
/// uniform clouds this is the assignment for |x_i - 8A* y_j|^2.
inline GromovMongeMap gromov_monge_map(const PointCloud& x, const PointCloud& y, const IGWOptions& opts = {}) {
  const auto res = igw_alternating(x, y, opts);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(res.dual_A);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  detail::require(smin > 1e-10, ErrorKind::map_does_not_exist,
                  "Gromov-Monge map needs a nonsingular dual matrix A*; smallest singular value is " +
                      std::to_string(smin));
  const PointCloud target = apply_linear(y, 8.0 * res.dual_A);
  auto sol = solve_assignment(squared_distance_cost(x, target));
  return {std::move(sol.perm), res.dual_A};
}

struct ComparisonReport {
  double igw = 0.0;
  double w2 = 0.0;
  double upper_bound = 0.0;  ///< (2 M2(x) + 2 M2(y))^{1/2} W2(x, y)
  bool lower_applicable = false;
  double lower_bound = 0.0;  ///< (avg of squared min eigenvalues)^{1/4} W2(x, O_# y)
  bool exact = false;        ///< IGW from brute force
  bool upper_violated = false;
  bool lower_violated = false;
};

inline ComparisonReport check_comparison_bounds(const PointCloud& x, const PointCloud& y,
                                                const IGWOptions& opts = {}, double tol = 1e-8) {
  detail::require_uniform_pair(x, y);
  ComparisonReport rep;
  rep.exact = x.size() <= 8;
  const IGWResult res = rep.exact ? igw_bruteforce(x, y) : igw_alternating(x, y, opts);
  rep.igw = res.igw();
  rep.w2 = w2_distance(x, y).value;
  rep.upper_bound = std::sqrt(2.0 * second_moment(x) + 2.0 * second_moment(y)) * rep.w2;
  rep.upper_violated = rep.igw > rep.upper_bound + tol;

  const double lx = lambda_min(covariance(x));
  const double ly = lambda_min(covariance(y));
  rep.lower_applicable = lx > 1e-12 && ly > 1e-12;
  if (rep.lower_applicable) {
    const SquareMatrix o = psd_rotation(x, y, res.coupling);
    const double w2_rot = w2_distance(x, apply_linear(y, o)).value;
    rep.lower_bound = std::pow(0.5 * (lx * lx + ly * ly), 0.25) * w2_rot;
    rep.lower_violated = rep.lower_bound > rep.igw + tol;
  }
  return rep;
}

}  // namespace igw
