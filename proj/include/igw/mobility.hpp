#pragma once
/// @file mobility.hpp
/// @brief The mobility operator L_{A,mu}[v](x) = 2(A v(x) + M_v x), with
/// M_v = sum_j w_j x_j v_j^T, its inverse on the invariant space and spectral
/// checks.
///
/// The invariant space I_mu holds the fields whose moment matrix M_v is
/// symmetric. Fields v(x) = S x with S skew lie in the kernel of L_{Sigma,mu}.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/error.hpp"
#include "igw/linalg.hpp"

namespace igw {

inline constexpr double kSingularEigenvalue = 1e-10;
inline constexpr double kIllConditioned = 1e12;
inline constexpr Eigen::Index kMaxOperatorSize = 2000;
inline constexpr Eigen::Index kMaxSpectrumSize = 500;

namespace detail {

inline void require_nonsingular_sym(const SquareMatrix& m, const char* name) {
  const auto ev = symmetric_eigenvalues(m);
  const double smallest = ev.cwiseAbs().minCoeff();
  require(smallest > kSingularEigenvalue, ErrorKind::singular,
          std::string(name) + " is singular: smallest |eigenvalue| = " + std::to_string(smallest));
}

}  // namespace detail

class OperatorContext {
 public:
  OperatorContext(SquareMatrix a, PointCloud cloud)
      : a_(std::move(a)), cloud_(std::move(cloud)), sigma_(covariance(cloud_)) {
    detail::require(a_.rows() == cloud_.dim() && a_.cols() == cloud_.dim(), ErrorKind::dimension_mismatch,
                    "A must be d x d");
    detail::require(a_.allFinite(), ErrorKind::non_finite, "A has non-finite entries");
    detail::require(is_symmetric(a_, 1e-10), ErrorKind::invalid_argument, "A must be symmetric");
  }

  /// L_{Sigma_mu, mu}.
  static OperatorContext with_covariance(const PointCloud& cloud) {
    return OperatorContext(covariance(cloud), cloud);
  }

  const SquareMatrix& a() const noexcept { return a_; }
  const PointCloud& cloud() const noexcept { return cloud_; }
  const SquareMatrix& sigma() const noexcept { return sigma_; }

 private:
  SquareMatrix a_;
  PointCloud cloud_;
  SquareMatrix sigma_;
};

/// Row i is 2(A v_i + M_v x_i).
inline VectorField apply(const OperatorContext& ctx, const VectorField& v) {
  require_field(ctx.cloud(), v);
  const SquareMatrix m = moment_matrix(ctx.cloud(), v);
  return 2.0 * (v * ctx.a().transpose() + ctx.cloud().points() * m.transpose());
}

/// Flattening used by operator_matrix: entry (i, a) sits at i*d + a.
inline Eigen::VectorXd flatten(const VectorField& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index a = 0; a < v.cols(); ++a) out(i * v.cols() + a) = v(i, a);
  return out;
}

inline VectorField unflatten(const Eigen::VectorXd& f, Eigen::Index d) {
  VectorField v(f.size() / d, d);
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index a = 0; a < d; ++a) v(i, a) = f(i * d + a);
  return v;
}

/// Dense nd x nd matrix of L; block (i, j) is 2(delta_ij A + w_j x_j x_i^T).
inline Eigen::MatrixXd operator_matrix(const OperatorContext& ctx) {
  const auto& cloud = ctx.cloud();
  const Eigen::Index n = cloud.size();
  const Eigen::Index d = cloud.dim();
  detail::require(n * d <= kMaxOperatorSize, ErrorKind::size_guard,
                  "operator_matrix limited to n*d <= 2000, got " + std::to_string(n * d));
  const auto& x = cloud.points();
  const auto& w = cloud.weights();
  Eigen::MatrixXd l(n * d, n * d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::MatrixXd block = 2.0 * w(j) * (x.row(j).transpose() * x.row(i));
      if (i == j) block += 2.0 * ctx.a();
      l.block(i * d, j * d, d, d) = block;
    }
  return l;
}

/// v' = v + S x with S skew solving Sigma S + S Sigma = M - M^T, so that
/// M_{v'} is symmetric and L_{Sigma,mu}[v'] = L_{Sigma,mu}[v].
inline VectorField project_invariant(const PointCloud& cloud, const VectorField& v) {
  require_field(cloud, v);
  const SquareMatrix m = moment_matrix(cloud, v);
  const SquareMatrix skew = m - m.transpose();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (skew.cwiseAbs().maxCoeff() <= 1e-15 * scale) return v;
  const SquareMatrix sigma = covariance(cloud);
  detail::require_nonsingular_sym(sigma, "covariance");
  SquareMatrix s = solve_sylvester(sigma, sigma, skew).x;
  s = 0.5 * (s - s.transpose());
  return v + cloud.points() * s.transpose();
}

struct InverseResult {
  VectorField v;
  /// w was projected onto I_mu before inversion.
  bool projected = false;
  /// Condition number of the d^2 x d^2 moment system.
  double condition = 1.0;
  bool ill_conditioned = false;
};

namespace detail {

/// K A + Sigma K^T = r as a d^2 x d^2 system in vec(K), column-major.
inline Eigen::MatrixXd moment_system(const SquareMatrix& a, const SquareMatrix& sigma) {
  const Eigen::Index d = a.rows();
  Eigen::MatrixXd sys(d * d, d * d);
  for (Eigen::Index col = 0; col < d; ++col)
    for (Eigen::Index row = 0; row < d; ++row) {
      SquareMatrix e = SquareMatrix::Zero(d, d);
      e(row, col) = 1.0;
      sys.col(col * d + row) = vec(e * a + sigma * e.transpose());
    }
  return sys;
}

}  // namespace detail

/// Solves L[v] = w. Writing K = M_v, v(x) = A^{-1}(w(x)/2 - K x) where K
/// satisfies K A + Sigma K^T = M_w / 2.
///
/// For A = Sigma that system is singular along K = Sigma S, S skew, which is
/// exactly the kernel of L. There w is first projected onto I_mu and K is the
/// symmetric solution of A K + K Sigma = M_w^T / 2, the closed form
/// v = A^{-1} w / 2 - A^{-1} B x. For any other A the full moment system is
/// solved, since the closed form assumes a symmetric K.
inline InverseResult inverse(const OperatorContext& ctx, const VectorField& w) {
  const auto& cloud = ctx.cloud();
  require_field(cloud, w);
  detail::require_nonsingular_sym(ctx.a(), "A");
  detail::require_nonsingular_sym(ctx.sigma(), "covariance");

  InverseResult out;
  VectorField rhs = w;
  SquareMatrix k;
  const double scale = std::max(ctx.a().norm(), ctx.sigma().norm());
  if ((ctx.a() - ctx.sigma()).norm() <= 1e-12 * scale) {
    const SquareMatrix mw = moment_matrix(cloud, w);
    if (!is_symmetric(mw, 1e-10)) {
      rhs = project_invariant(cloud, w);
      out.projected = true;
    }
    const auto syl = solve_sylvester(ctx.a(), ctx.sigma(), 0.5 * moment_matrix(cloud, rhs).transpose());
    out.condition = syl.condition;
    k = syl.x;
  } else {
    const Eigen::MatrixXd sys = detail::moment_system(ctx.a(), ctx.sigma());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    detail::require(smin > 1e-14 * sv(0), ErrorKind::singular,
                    "moment system K A + Sigma K^T is singular (min singular value " + std::to_string(smin) + ")");
    out.condition = sv(0) / smin;
    k = unvec(sys.partialPivLu().solve(vec(0.5 * moment_matrix(cloud, w))), cloud.dim(), cloud.dim());
  }
  out.ill_conditioned = out.condition > kIllConditioned;

  const SquareMatrix a_inv = ctx.a().partialPivLu().inverse();
  out.v = (0.5 * rhs - cloud.points() * k.transpose()) * a_inv.transpose();
  return out;
}

struct SpectrumReport {
  bool skipped = false;
  std::string notice;
  /// Eigenvalues of L_{Sigma,mu} restricted to I_mu, ascending.
  std::vector<double> eigenvalues;
  /// 2 * (eigenvalues of Sigma, and their pairwise sums i <= j).
  std::vector<double> predicted;
  /// Largest distance from a nonzero eigenvalue to the predicted set.
  double max_mismatch = 0.0;
  bool passed = true;
};

/// Builds L_{Sigma,mu} densely, restricts it to I_mu and compares its
/// eigenvalues with 2(Lambda u {l_i + l_j}).
inline SpectrumReport spectrum_check(const PointCloud& cloud, double tol = 1e-6) {
  SpectrumReport rep;
  const Eigen::Index n = cloud.size();
  const Eigen::Index d = cloud.dim();
  if (n == 1) {
    rep.skipped = true;
    rep.notice = "single-point cloud: invariant space is degenerate, check skipped";
    return rep;
  }
  detail::require(n * d <= kMaxSpectrumSize, ErrorKind::size_guard,
                  "spectrum_check limited to n*d <= 500, got " + std::to_string(n * d));
  const auto ctx = OperatorContext::with_covariance(cloud);
  detail::require_nonsingular_sym(ctx.sigma(), "covariance");

  const Eigen::VectorXd lam = symmetric_eigenvalues(ctx.sigma());
  for (Eigen::Index i = 0; i < d; ++i) {
    rep.predicted.push_back(2.0 * lam(i));
    for (Eigen::Index j = i; j < d; ++j) rep.predicted.push_back(2.0 * (lam(i) + lam(j)));
  }
  std::sort(rep.predicted.begin(), rep.predicted.end());

  // In u = W^{1/2} v coordinates L becomes symmetric; the invariant space is
  // the null space of the antisymmetric part of M_v.
  const auto& x = cloud.points();
  const auto& w = cloud.weights();
  Eigen::VectorXd sqrt_w(n * d), inv_sqrt_w(n * d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < d; ++a) {
      sqrt_w(i * d + a) = std::sqrt(w(i));
      inv_sqrt_w(i * d + a) = w(i) > 0.0 ? 1.0 / std::sqrt(w(i)) : 0.0;
    }
  const Eigen::MatrixXd l = operator_matrix(ctx);
  const Eigen::MatrixXd ls = sqrt_w.asDiagonal() * l * inv_sqrt_w.asDiagonal();

  const Eigen::Index ncons = d * (d - 1) / 2;
  Eigen::MatrixXd cons = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(ncons, 1), n * d);
  Eigen::Index row = 0;
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b, ++row)
      for (Eigen::Index i = 0; i < n; ++i) {
        // M_ab - M_ba with v_i = u_i / sqrt(w_i)
        cons(row, i * d + b) += std::sqrt(w(i)) * x(i, a);
        cons(row, i * d + a) -= std::sqrt(w(i)) * x(i, b);
      }

  Eigen::MatrixXd basis;
  if (ncons == 0) {
    basis = Eigen::MatrixXd::Identity(n * d, n * d);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cons, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv(k) > 1e-12 * std::max(1.0, sv(0))) ++rank;
    basis = svd.matrixV().rightCols(n * d - rank);
  }
  Eigen::MatrixXd restricted = basis.transpose() * ls * basis;
  restricted = 0.5 * (restricted + restricted.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(restricted, Eigen::EigenvaluesOnly);
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) rep.eigenvalues.push_back(es.eigenvalues()(k));

  for (double ev : rep.eigenvalues) {
    if (std::abs(ev) <= tol) continue;
    double gap = std::numeric_limits<double>::infinity();
    for (double p : rep.predicted) gap = std::min(gap, std::abs(ev - p));
    rep.max_mismatch = std::max(rep.max_mismatch, gap);
  }
  rep.passed = rep.max_mismatch <= tol;
  return rep;
}

}  // namespace igw
