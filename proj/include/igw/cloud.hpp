#pragma once
/// @file cloud.hpp
/// @brief Weighted point clouds and their moments.
///
/// A PointCloud is the finite support of a probability measure on R^d. The
/// "covariance" used throughout the library is the uncentered second-moment
/// matrix sum_i w_i x_i x_i^T.

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "igw/error.hpp"
#include "igw/linalg.hpp"

namespace igw {

class PointCloud {
 public:
  /// Validates finiteness, shape and that weights form a probability vector.
  PointCloud(Eigen::MatrixXd points, Eigen::VectorXd weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    detail::require(points_.rows() >= 1 && points_.cols() >= 1, ErrorKind::invalid_argument,
                    "point cloud needs n >= 1 and d >= 1");
    detail::require(weights_.size() == points_.rows(), ErrorKind::dimension_mismatch,
                    "weight count " + std::to_string(weights_.size()) + " != point count " +
                        std::to_string(points_.rows()));
    detail::require(points_.allFinite(), ErrorKind::non_finite, "point coordinates must be finite");
    detail::require(weights_.allFinite() && (weights_.array() >= 0.0).all(),
                    ErrorKind::invalid_argument, "weights must be finite and nonnegative");
    const double total = weights_.sum();
    detail::require(std::abs(total - 1.0) <= 1e-12, ErrorKind::invalid_argument,
                    "weights must sum to 1 (got " + std::to_string(total) + ")");
  }

  /// Every weight is exactly 1/n.
  static PointCloud uniform(Eigen::MatrixXd points) {
    const auto n = points.rows();
    detail::require(n >= 1, ErrorKind::invalid_argument, "point cloud needs n >= 1");
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    return PointCloud(std::move(points), std::move(w));
  }

  const Eigen::MatrixXd& points() const noexcept { return points_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }

  bool is_uniform() const {
    const double u = 1.0 / static_cast<double>(size());
    return (weights_.array() == u).all();
  }

  /// Same weights, new support locations.
  PointCloud with_points(Eigen::MatrixXd points) const {
    detail::require(points.rows() == size(), ErrorKind::dimension_mismatch,
                    "replacement points must keep the point count");
    return PointCloud(std::move(points), weights_);
  }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

/// sum_i w_i x_i x_i^T. Entry (a,b) is accumulated as w_i * (x_ia * x_ib), so
/// the result is exactly symmetric.
inline SquareMatrix covariance(const PointCloud& cloud) {
  const auto& x = cloud.points();
  const auto& w = cloud.weights();
  const Eigen::Index d = cloud.dim();
  SquareMatrix s = SquareMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) s(a, b) += w(i) * (x(i, a) * x(i, b));
  return s;
}

/// M_2 = sum_i w_i |x_i|^2, the trace of covariance().
inline double second_moment(const PointCloud& cloud) {
  const auto& x = cloud.points();
  const auto& w = cloud.weights();
  double m = 0.0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) m += w(i) * x.row(i).squaredNorm();
  return m;
}

/// Points replaced by points * m^T, i.e. the pushforward m_# cloud.
inline PointCloud apply_linear(const PointCloud& cloud, const SquareMatrix& m) {
  detail::require(m.rows() == cloud.dim() && m.cols() == cloud.dim(), ErrorKind::dimension_mismatch,
                  "linear map must be d x d with d = " + std::to_string(cloud.dim()));
  return cloud.with_points(cloud.points() * m.transpose());
}

/// Moment matrix sum_i w_i x_i v_i^T of a field over the cloud.
inline SquareMatrix moment_matrix(const PointCloud& cloud, const VectorField& v) {
  detail::require(v.rows() == cloud.size() && v.cols() == cloud.dim(), ErrorKind::dimension_mismatch,
                  "vector field shape does not match the cloud");
  const auto& x = cloud.points();
  const auto& w = cloud.weights();
  const Eigen::Index d = cloud.dim();
  SquareMatrix m = SquareMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) m(a, b) += w(i) * (x(i, a) * v(i, b));
  return m;
}

/// L^2(mu) inner product sum_i w_i <u_i, v_i>.
inline double l2_inner(const PointCloud& cloud, const VectorField& u, const VectorField& v) {
  detail::require(u.rows() == cloud.size() && v.rows() == cloud.size() && u.cols() == v.cols(),
                  ErrorKind::dimension_mismatch, "fields must match the cloud");
  double s = 0.0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) s += cloud.weights()(i) * u.row(i).dot(v.row(i));
  return s;
}

inline void require_field(const PointCloud& cloud, const VectorField& v) {
  detail::require(v.rows() == cloud.size() && v.cols() == cloud.dim(), ErrorKind::dimension_mismatch,
                  "vector field is " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                      ", cloud is " + std::to_string(cloud.size()) + "x" + std::to_string(cloud.dim()));
  detail::require(v.allFinite(), ErrorKind::non_finite, "vector field has non-finite entries");
}

}  // namespace igw
