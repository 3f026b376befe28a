#pragma once
/// @file coupling.hpp
/// @brief Transport plans between two point clouds.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/error.hpp"

namespace igw {

using Permutation = std::vector<Eigen::Index>;

inline bool is_bijection(const Permutation& perm) {
  std::vector<char> seen(perm.size(), 0);
  for (auto j : perm) {
    if (j < 0 || static_cast<std::size_t>(j) >= perm.size() || seen[j]) return false;
    seen[j] = 1;
  }
  return true;
}

inline Permutation identity_permutation(Eigen::Index n) {
  Permutation p(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) p[i] = i;
  return p;
}

/// A plan pi in Pi(mu, nu), held either as a permutation (uniform marginals of
/// equal size, pi_{i,sigma(i)} = 1/n) or as a dense nonnegative matrix.
class Coupling {
 public:
  static constexpr double kMarginalTol = 1e-10;

  static Coupling from_permutation(Permutation perm) {
    detail::require(!perm.empty() && is_bijection(perm), ErrorKind::coupling_invalid,
                    "permutation coupling must be a bijection on {0..n-1}");
    Coupling c;
    const auto n = static_cast<Eigen::Index>(perm.size());
    c.source_ = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    c.target_ = c.source_;
    c.perm_ = std::move(perm);
    return c;
  }

  static Coupling identity(Eigen::Index n) { return from_permutation(identity_permutation(n)); }

  static Coupling from_dense(Eigen::MatrixXd plan, const Eigen::VectorXd& source,
                             const Eigen::VectorXd& target) {
    detail::require(plan.rows() == source.size() && plan.cols() == target.size(),
                    ErrorKind::coupling_invalid, "plan shape does not match the marginals");
    detail::require(plan.allFinite() && (plan.array() >= 0.0).all(), ErrorKind::coupling_invalid,
                    "plan entries must be finite and nonnegative");
    const double row_err = (plan.rowwise().sum() - source).cwiseAbs().maxCoeff();
    const double col_err = (plan.colwise().sum().transpose() - target).cwiseAbs().maxCoeff();
    detail::require(row_err <= kMarginalTol && col_err <= kMarginalTol, ErrorKind::coupling_invalid,
                    "plan marginals mismatch (row err " + std::to_string(row_err) + ", col err " +
                        std::to_string(col_err) + ")");
    Coupling c;
    c.source_ = source;
    c.target_ = target;
    c.dense_ = std::move(plan);
    return c;
  }

  /// Independent coupling w_x w_y^T.
  static Coupling product(const PointCloud& x, const PointCloud& y) {
    return from_dense(x.weights() * y.weights().transpose(), x.weights(), y.weights());
  }

  bool is_permutation() const noexcept { return perm_.has_value(); }
  const Permutation& permutation() const {
    detail::require(perm_.has_value(), ErrorKind::invalid_argument, "coupling is not a permutation");
    return *perm_;
  }
  Eigen::Index rows() const noexcept { return source_.size(); }
  Eigen::Index cols() const noexcept { return target_.size(); }
  const Eigen::VectorXd& source_weights() const noexcept { return source_; }
  const Eigen::VectorXd& target_weights() const noexcept { return target_; }

  Eigen::MatrixXd dense() const {
    if (dense_) return *dense_;
    const auto n = rows();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) m(i, (*perm_)[i]) = source_(i);
    return m;
  }

  /// Throws coupling_invalid unless this plan has marginals (x.weights, y.weights).
  void check_couples(const PointCloud& x, const PointCloud& y) const {
    detail::require(rows() == x.size() && cols() == y.size(), ErrorKind::coupling_invalid,
                    "plan is " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                        " but clouds have " + std::to_string(x.size()) + " and " +
                        std::to_string(y.size()) + " points");
    const double err = std::max((source_ - x.weights()).cwiseAbs().maxCoeff(),
                                (target_ - y.weights()).cwiseAbs().maxCoeff());
    detail::require(err <= kMarginalTol, ErrorKind::coupling_invalid,
                    "plan marginals differ from cloud weights by " + std::to_string(err));
  }

 private:
  Coupling() = default;

  Eigen::VectorXd source_;
  Eigen::VectorXd target_;
  std::optional<Permutation> perm_;
  std::optional<Eigen::MatrixXd> dense_;
};

/// sum_ij pi_ij x_i y_j^T. Entries accumulate as pi_ij * (x_ia * y_jb), which
/// makes cross_covariance(x, x, identity) bit-identical to covariance(x).
inline SquareMatrix cross_covariance(const PointCloud& x, const PointCloud& y, const Coupling& plan) {
  plan.check_couples(x, y);
  detail::require(x.dim() == y.dim(), ErrorKind::dimension_mismatch, "clouds must share d");
  const Eigen::Index d = x.dim();
  const auto& px = x.points();
  const auto& py = y.points();
  SquareMatrix c = SquareMatrix::Zero(d, d);
  if (plan.is_permutation()) {
    const auto& perm = plan.permutation();
    const auto& w = plan.source_weights();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Eigen::Index j = perm[i];
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) c(a, b) += w(i) * (px(i, a) * py(j, b));
    }
  } else {
    const Eigen::MatrixXd pi = plan.dense();
    for (Eigen::Index i = 0; i < x.size(); ++i)
      for (Eigen::Index j = 0; j < y.size(); ++j) {
        if (pi(i, j) == 0.0) continue;
        for (Eigen::Index a = 0; a < d; ++a)
          for (Eigen::Index b = 0; b < d; ++b) c(a, b) += pi(i, j) * (px(i, a) * py(j, b));
      }
  }
  return c;
}

}  // namespace igw
