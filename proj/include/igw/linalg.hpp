#pragma once
/// @file linalg.hpp
/// @brief Small dense helpers: matrix predicates, Kronecker-form Sylvester
/// solves and seeded random orthogonal matrices.

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "igw/error.hpp"

namespace igw {

/// d x d real matrix (covariances, dual variables, rotations).
using SquareMatrix = Eigen::MatrixXd;

/// Per-support-point velocities, row i is v(x_i).
using VectorField = Eigen::MatrixXd;

/// Largest matrix dimension accepted by the Kronecker-form Sylvester solver.
inline constexpr Eigen::Index kMaxSylvesterDim = 8;

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

inline bool is_square(const Eigen::MatrixXd& m) { return m.rows() == m.cols(); }

inline bool is_symmetric(const Eigen::MatrixXd& m, double tol = 1e-10) {
  return is_square(m) && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Eigenvalues of the symmetric part, ascending.
inline Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_min(const Eigen::MatrixXd& m) { return symmetric_eigenvalues(m)(0); }

inline double lambda_max(const Eigen::MatrixXd& m) {
  const auto ev = symmetric_eigenvalues(m);
  return ev(ev.size() - 1);
}

inline bool is_psd(const Eigen::MatrixXd& m, double tol = 1e-10) {
  return is_symmetric(m, tol) && lambda_min(m) >= -tol;
}

inline bool is_orthogonal(const Eigen::MatrixXd& m, double tol = 1e-10) {
  if (!is_square(m)) return false;
  const auto eye = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  return (m.transpose() * m - eye).cwiseAbs().maxCoeff() <= tol;
}

/// Kronecker product a (x) b.
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-major vectorization.
inline Eigen::VectorXd vec(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

inline Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

struct SylvesterSolution {
  SquareMatrix x;
  /// 2-norm condition number of the Kronecker system.
  double condition = 1.0;
};

/// Solves a X + X b = c through (I (x) a + b^T (x) I) vec(X) = vec(c) with
/// dense LU.
inline SylvesterSolution solve_sylvester(const SquareMatrix& a, const SquareMatrix& b,
                                         const SquareMatrix& c) {
  const Eigen::Index d = a.rows();
  detail::require(is_square(a) && is_square(b) && b.rows() == d && c.rows() == d && c.cols() == d,
                  ErrorKind::dimension_mismatch, "sylvester operands must all be d x d");
  detail::require(d <= kMaxSylvesterDim, ErrorKind::size_guard,
                  "sylvester solve limited to d <= 8, got d = " + std::to_string(d));
  const auto eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd k = kron(eye, a) + kron(b.transpose(), eye);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(k);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  detail::require(smin > 0.0 && std::isfinite(smax), ErrorKind::singular,
                  "sylvester system is singular (min singular value " + std::to_string(smin) + ")");

  SylvesterSolution out;
  out.condition = smax / smin;
  out.x = unvec(k.partialPivLu().solve(vec(c)), d, d);
  return out;
}

/// Haar-distributed orthogonal matrix with the requested determinant sign
/// (+1 or -1), from the QR factorization of a Gaussian matrix.
template <class Rng>
SquareMatrix random_orthogonal(Eigen::Index d, Rng& rng, int det_sign = +1) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if ((q.determinant() > 0) != (det_sign > 0)) q.col(0) *= -1.0;
  return q;
}

/// Counter-clockwise planar rotation.
inline SquareMatrix rotation_2d(double radians) {
  SquareMatrix r(2, 2);
  r << std::cos(radians), -std::sin(radians), std::sin(radians), std::cos(radians);
  return r;
}

/// diag(-1, 1, ..., 1).
inline SquareMatrix reflection(Eigen::Index d) {
  SquareMatrix r = SquareMatrix::Identity(d, d);
  r(0, 0) = -1.0;
  return r;
}

}  // namespace igw
