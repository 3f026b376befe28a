#pragma once
// Independent reference computations used only by the tests. Each one is the
// slow, definitional form of something the library computes faster.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/coupling.hpp"

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_points(std::mt19937_64& rng, Index n, Index d, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < d; ++a) x(i, a) = g(rng);
  return x;
}

inline igw::PointCloud random_cloud(std::mt19937_64& rng, Index n, Index d, double scale = 1.0) {
  return igw::PointCloud::uniform(random_points(rng, n, d, scale));
}

inline MatrixXd random_matrix(std::mt19937_64& rng, Index r, Index c) { return random_points(rng, r, c); }

inline MatrixXd random_spd(std::mt19937_64& rng, Index d) {
  const MatrixXd g = random_matrix(rng, d, d);
  return g * g.transpose() + 0.5 * MatrixXd::Identity(d, d);
}

inline MatrixXd random_skew(std::mt19937_64& rng, Index d) {
  const MatrixXd g = random_matrix(rng, d, d);
  return g - g.transpose();
}

/// Random doubly-stochastic-like plan with the given marginals (iterative
/// proportional fitting of a positive matrix).
inline MatrixXd random_plan(std::mt19937_64& rng, const VectorXd& a, const VectorXd& b) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  MatrixXd p(a.size(), b.size());
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) p(i, j) = u(rng);
  for (int it = 0; it < 2000; ++it) {
    for (Index i = 0; i < p.rows(); ++i) p.row(i) *= a(i) / p.row(i).sum();
    for (Index j = 0; j < p.cols(); ++j) p.col(j) *= b(j) / p.col(j).sum();
  }
  return p;
}

/// sum_i w_i x_i x_i^T in extended precision.
inline MatrixXd covariance_ld(const igw::PointCloud& c) {
  const Index d = c.dim();
  MatrixXd out(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b) {
      long double s = 0.0L;
      for (Index i = 0; i < c.size(); ++i)
        s += static_cast<long double>(c.weights()(i)) * c.points()(i, a) * c.points()(i, b);
      out(a, b) = static_cast<double>(s);
    }
  return out;
}

/// sum_ij P_ij x_i y_j^T, plain double loop over a dense plan.
inline MatrixXd cross_covariance_dense(const MatrixXd& x, const MatrixXd& y, const MatrixXd& plan) {
  MatrixXd c = MatrixXd::Zero(x.cols(), y.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) c += plan(i, j) * x.row(i).transpose() * y.row(j);
  return c;
}

struct Enumerated {
  std::vector<Index> perm;
  double value = std::numeric_limits<double>::infinity();
};

/// Minimizes f over all permutations of {0..n-1}.
inline Enumerated enumerate_permutations(Index n, const std::function<double(const std::vector<Index>&)>& f) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  Enumerated best;
  do {
    const double v = f(p);
    if (v < best.value) {
      best.value = v;
      best.perm = p;
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// (1/n) sum_i cost(i, p(i)), same summation order as the library.
inline double mean_cost(const MatrixXd& cost, const std::vector<Index>& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += cost(static_cast<Index>(i), p[i]);
  return s / static_cast<double>(p.size());
}

/// Definitional IGW objective for a dense plan:
/// sum_{ij} sum_{kl} P_ij P_kl (<x_i, x_k> - <y_j, y_l>)^2.
inline double igw_quadruple_sum(const MatrixXd& x, const MatrixXd& y, const MatrixXd& plan) {
  long double s = 0.0L;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) {
      if (plan(i, j) == 0.0) continue;
      for (Index k = 0; k < x.rows(); ++k)
        for (Index l = 0; l < y.rows(); ++l) {
          if (plan(k, l) == 0.0) continue;
          const long double diff = x.row(i).dot(x.row(k)) - y.row(j).dot(y.row(l));
          s += static_cast<long double>(plan(i, j)) * plan(k, l) * diff * diff;
        }
    }
  return static_cast<double>(s);
}

/// Same for a permutation plan with uniform weights, O(n^2).
inline double igw_permutation_sum(const MatrixXd& x, const MatrixXd& y, const std::vector<Index>& p) {
  const Index n = x.rows();
  long double s = 0.0L;
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < n; ++k) {
      const long double diff = x.row(i).dot(x.row(k)) - y.row(p[i]).dot(y.row(p[k]));
      s += diff * diff;
    }
  return static_cast<double>(s / (static_cast<long double>(n) * n));
}

/// Exact IGW^2 by enumerating permutations of the definitional objective.
inline Enumerated igw_exact(const MatrixXd& x, const MatrixXd& y) {
  return enumerate_permutations(x.rows(), [&](const std::vector<Index>& p) { return igw_permutation_sum(x, y, p); });
}

/// Integral form of the metric tensor:
/// sum_ij w_i w_j (<v_i, x_j> + <x_i, v_j>)(<w_i, x_j> + <x_i, w_j>).
inline double metric_double_sum(const igw::PointCloud& c, const MatrixXd& v, const MatrixXd& w) {
  const auto& x = c.points();
  long double s = 0.0L;
  for (Index i = 0; i < c.size(); ++i)
    for (Index j = 0; j < c.size(); ++j) {
      const long double a = v.row(i).dot(x.row(j)) + x.row(i).dot(v.row(j));
      const long double b = w.row(i).dot(x.row(j)) + x.row(i).dot(w.row(j));
      s += static_cast<long double>(c.weights()(i)) * c.weights()(j) * a * b;
    }
  return static_cast<double>(s);
}

/// Direct triple sum over bandwidths and pairs of the V-statistic MMD.
inline double mmd_triple_sum(const igw::PointCloud& a, const igw::PointCloud& b, double sigma,
                             const std::vector<double>& mult) {
  auto k = [&](const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
    long double s = 0.0L;
    for (double m : mult) {
      const double h = sigma * m;
      s += std::exp(-(p - q).squaredNorm() / (2.0 * h * h));
    }
    return s;
  };
  long double s = 0.0L;
  for (Index i = 0; i < a.size(); ++i)
    for (Index j = 0; j < a.size(); ++j) s += a.weights()(i) * a.weights()(j) * k(a.points().row(i), a.points().row(j));
  for (Index i = 0; i < b.size(); ++i)
    for (Index j = 0; j < b.size(); ++j) s += b.weights()(i) * b.weights()(j) * k(b.points().row(i), b.points().row(j));
  for (Index i = 0; i < a.size(); ++i)
    for (Index j = 0; j < b.size(); ++j)
      s -= 2.0L * a.weights()(i) * b.weights()(j) * k(a.points().row(i), b.points().row(j));
  return static_cast<double>(s);
}

/// Central finite difference of f at x along every coordinate of a matrix.
inline MatrixXd fd_gradient(const std::function<double(const MatrixXd&)>& f, const MatrixXd& x, double h = 1e-6) {
  MatrixXd g(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      MatrixXd p = x, m = x;
      p(i, j) += h;
      m(i, j) -= h;
      g(i, j) = (f(p) - f(m)) / (2.0 * h);
    }
  return g;
}

/// Cloud with uncentered second moment exactly I (up to round-off).
inline igw::PointCloud whitened_cloud(std::mt19937_64& rng, Index n, Index d) {
  const auto c = random_cloud(rng, n, d);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(covariance_ld(c));
  const MatrixXd inv_sqrt = es.operatorInverseSqrt();
  return igw::PointCloud::uniform(c.points() * inv_sqrt);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double rel_diff(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm()));
}

}  // namespace oracle
