#pragma once
/// @file functionals.hpp
/// @brief Potential energy, smoothed Coulomb interaction and nearest-neighbour
/// entropy surrogates on point clouds, with their Wasserstein gradients.
///
/// Gradients are the exact Wasserstein gradients of the values below,
/// grad_i = (1/w_i) d value / d x_i, so they agree with finite differences.

#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/error.hpp"

namespace igw {

enum class FunctionalKind { potential, coulomb, entropy };

inline FunctionalKind parse_functional_kind(std::string_view name) {
  if (name == "potential") return FunctionalKind::potential;
  if (name == "coulomb") return FunctionalKind::coulomb;
  if (name == "entropy") return FunctionalKind::entropy;
  throw Error(ErrorKind::invalid_argument, "unknown functional '" + std::string(name) + "'");
}

inline const char* to_string(FunctionalKind kind) {
  switch (kind) {
    case FunctionalKind::potential: return "potential";
    case FunctionalKind::coulomb: return "coulomb";
    case FunctionalKind::entropy: return "entropy";
  }
  return "unknown";
}

struct Functional;
double value(const Functional& f, const PointCloud& cloud);
VectorField wasserstein_gradient(const Functional& f, const PointCloud& cloud);

struct Functional {
  FunctionalKind kind = FunctionalKind::potential;
  double epsilon = 0.2;

  double value(const PointCloud& cloud) const { return igw::value(*this, cloud); }
  VectorField gradient(const PointCloud& cloud) const { return wasserstein_gradient(*this, cloud); }
};

namespace detail {

inline void check_pairwise(const Functional& f, const PointCloud& cloud) {
  require(f.epsilon > 0.0, ErrorKind::invalid_argument, "epsilon must be positive");
  require(cloud.size() >= 2, ErrorKind::invalid_argument,
          std::string(to_string(f.kind)) + " needs at least 2 points");
  require(cloud.is_uniform(), ErrorKind::unsupported_marginals,
          std::string(to_string(f.kind)) + " is defined for uniform point clouds");
}

/// Index of the nearest other point; ties go to the smallest index.
inline Eigen::Index nearest_neighbour(const Eigen::MatrixXd& x, Eigen::Index i, double* dist2) {
  Eigen::Index best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    if (j == i) continue;
    const double d2 = (x.row(i) - x.row(j)).squaredNorm();
    if (d2 < bd) {
      bd = d2;
      best = j;
    }
  }
  *dist2 = bd;
  return best;
}

}  // namespace detail

inline double value(const Functional& f, const PointCloud& cloud) {
  const auto& x = cloud.points();
  const Eigen::Index n = cloud.size();
  switch (f.kind) {
    case FunctionalKind::potential:
      return 0.5 * second_moment(cloud);
    case FunctionalKind::coulomb: {
      detail::check_pairwise(f, cloud);
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) s += std::log(f.epsilon + (x.row(i) - x.row(j)).squaredNorm());
      // each unordered pair appears twice in the sum over i != j
      return -s / (static_cast<double>(n) * static_cast<double>(n - 1));
    }
    case FunctionalKind::entropy: {
      detail::check_pairwise(f, cloud);
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double d2 = 0.0;
        detail::nearest_neighbour(x, i, &d2);
        s += std::log(f.epsilon + d2);
      }
      return s / (2.0 * static_cast<double>(n));
    }
  }
  return 0.0;
}

inline VectorField wasserstein_gradient(const Functional& f, const PointCloud& cloud) {
  const auto& x = cloud.points();
  const Eigen::Index n = cloud.size();
  switch (f.kind) {
    case FunctionalKind::potential:
      return x;
    case FunctionalKind::coulomb: {
      detail::check_pairwise(f, cloud);
      VectorField g = VectorField::Zero(n, cloud.dim());
      const double c = -2.0 / static_cast<double>(n - 1);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
          const Eigen::RowVectorXd diff = x.row(i) - x.row(j);
          const Eigen::RowVectorXd term = c * diff / (f.epsilon + diff.squaredNorm());
          g.row(i) += term;
          g.row(j) -= term;
        }
      return g;
    }
    case FunctionalKind::entropy: {
      detail::check_pairwise(f, cloud);
      VectorField g = VectorField::Zero(n, cloud.dim());
      for (Eigen::Index i = 0; i < n; ++i) {
        double d2 = 0.0;
        const Eigen::Index k = detail::nearest_neighbour(x, i, &d2);
        const Eigen::RowVectorXd term = (x.row(i) - x.row(k)) / (f.epsilon + d2);
        // point i's own term plus the term it contributes as k's neighbour
        g.row(i) += term;
        g.row(k) -= term;
      }
      return g;
    }
  }
  return VectorField::Zero(n, cloud.dim());
}

}  // namespace igw
