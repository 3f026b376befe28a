#pragma once
/// @file shapes.hpp
/// @brief Deterministic 2-D benchmark shapes (ellipse, square, two moons,
/// two circles, infinity symbol) with optional seeded jitter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/error.hpp"

namespace igw {

enum class ShapeKind { ellipse, square, two_moons, two_circles, infinity };

inline ShapeKind parse_shape_kind(std::string_view name) {
  if (name == "ellipse") return ShapeKind::ellipse;
  if (name == "square") return ShapeKind::square;
  if (name == "two_moons") return ShapeKind::two_moons;
  if (name == "two_circles") return ShapeKind::two_circles;
  if (name == "infinity") return ShapeKind::infinity;
  throw Error(ErrorKind::invalid_argument, "unknown shape kind '" + std::string(name) + "'");
}

inline const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::square: return "square";
    case ShapeKind::two_moons: return "two_moons";
    case ShapeKind::two_circles: return "two_circles";
    case ShapeKind::infinity: return "infinity";
  }
  return "unknown";
}

struct ShapeParams {
  double semi_major = 1.0;   ///< ellipse x semi-axis
  double semi_minor = 0.5;   ///< ellipse y semi-axis
  double side = 2.0;         ///< square side length
  double inner_radius = 0.5; ///< two_circles inner radius (outer is 1)
  double scale = 1.0;        ///< infinity symbol half-width; two_moons scale
  double jitter = 0.0;       ///< std-dev of additive Gaussian noise
  /// Draw curve parameters uniformly at random instead of equispaced.
  bool random_parameter = false;
  std::uint64_t seed = 0;
};

namespace detail {

/// Either k/count (equispaced on [0,1), or [0,1] when closed) or U[0,1).
class CurveSampler {
 public:
  CurveSampler(const ShapeParams& p, std::mt19937_64& rng) : random_(p.random_parameter), rng_(rng) {}

  double at(Eigen::Index k, Eigen::Index count, bool include_end) {
    if (random_) return uniform_(rng_);
    if (include_end) return count <= 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    return static_cast<double>(k) / static_cast<double>(count);
  }

 private:
  bool random_;
  std::mt19937_64& rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace detail

/// Uniform-weight cloud of n points tracing the named shape.
inline PointCloud generate_shape(ShapeKind kind, Eigen::Index n, const ShapeParams& p = {}) {
  detail::require(n >= 1, ErrorKind::invalid_argument, "shape needs n >= 1");
  constexpr double pi = std::numbers::pi;
  std::mt19937_64 rng(p.seed);
  detail::CurveSampler sample(p, rng);
  Eigen::MatrixXd pts(n, 2);

  switch (kind) {
    case ShapeKind::ellipse:
      for (Eigen::Index k = 0; k < n; ++k) {
        const double th = 2.0 * pi * sample.at(k, n, false);
        pts(k, 0) = p.semi_major * std::cos(th);
        pts(k, 1) = p.semi_minor * std::sin(th);
      }
      break;
    case ShapeKind::square: {
      const double h = 0.5 * p.side;
      for (Eigen::Index k = 0; k < n; ++k) {
        // arc length along the boundary, starting at the corner (-h, -h)
        const double s = 4.0 * sample.at(k, n, false);
        const int edge = std::min(3, static_cast<int>(std::floor(s)));
        const double u = -h + (s - edge) * p.side;
        switch (edge) {
          case 0: pts(k, 0) = u; pts(k, 1) = -h; break;
          case 1: pts(k, 0) = h; pts(k, 1) = u; break;
          case 2: pts(k, 0) = -u; pts(k, 1) = h; break;
          default: pts(k, 0) = -h; pts(k, 1) = -u; break;
        }
      }
      break;
    }
    case ShapeKind::two_moons: {
      const Eigen::Index outer = n / 2 + n % 2;
      const Eigen::Index inner = n - outer;
      for (Eigen::Index k = 0; k < outer; ++k) {
        const double th = pi * sample.at(k, outer, true);
        pts(k, 0) = p.scale * (std::cos(th) - 0.5);
        pts(k, 1) = p.scale * (std::sin(th) - 0.25);
      }
      for (Eigen::Index k = 0; k < inner; ++k) {
        const double th = pi * sample.at(k, inner, true);
        pts(outer + k, 0) = p.scale * (0.5 - std::cos(th));
        pts(outer + k, 1) = p.scale * (0.25 - std::sin(th));
      }
      break;
    }
    case ShapeKind::two_circles: {
      const Eigen::Index outer = n / 2 + n % 2;
      const Eigen::Index inner = n - outer;
      for (Eigen::Index k = 0; k < outer; ++k) {
        const double th = 2.0 * pi * sample.at(k, outer, false);
        pts(k, 0) = std::cos(th);
        pts(k, 1) = std::sin(th);
      }
      for (Eigen::Index k = 0; k < inner; ++k) {
        const double th = 2.0 * pi * sample.at(k, inner, false);
        pts(outer + k, 0) = p.inner_radius * std::cos(th);
        pts(outer + k, 1) = p.inner_radius * std::sin(th);
      }
      break;
    }
    case ShapeKind::infinity:
      // lemniscate of Bernoulli
      for (Eigen::Index k = 0; k < n; ++k) {
        const double th = 2.0 * pi * sample.at(k, n, false);
        const double den = 1.0 + std::sin(th) * std::sin(th);
        pts(k, 0) = p.scale * std::cos(th) / den;
        pts(k, 1) = p.scale * std::sin(th) * std::cos(th) / den;
      }
      break;
  }

  if (p.jitter > 0.0) {
    std::normal_distribution<double> noise(0.0, p.jitter);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index a = 0; a < 2; ++a) pts(k, a) += noise(rng);
  }
  return PointCloud::uniform(std::move(pts));
}

}  // namespace igw
