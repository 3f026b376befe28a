#pragma once
/// @file gradient_flow.hpp
/// @brief IGW and Wasserstein gradient flows of point-cloud functionals:
/// explicit Euler, the descent/damping split of dF/dt, and the
/// minimizing-movement (JKO) scheme with PSD re-alignment.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "igw/cloud.hpp"
#include "igw/coupling.hpp"
#include "igw/distance.hpp"
#include "igw/error.hpp"
#include "igw/format.hpp"
#include "igw/functionals.hpp"
#include "igw/linalg.hpp"
#include "igw/mobility.hpp"
#include "igw/trajectory.hpp"

namespace igw {

enum class Geometry { igw, wasserstein };

inline Geometry parse_geometry(std::string_view name) {
  if (name == "igw") return Geometry::igw;
  if (name == "wasserstein" || name == "w2") return Geometry::wasserstein;
  throw Error(ErrorKind::invalid_argument, "unknown geometry '" + std::string(name) + "'");
}

inline const char* to_string(Geometry g) { return g == Geometry::igw ? "igw" : "wasserstein"; }

inline constexpr double kDefaultSingularityFloor = 1e-8;

namespace detail {

inline void require_flowable(const PointCloud& cloud, double floor) {
  const double lam = lambda_min(covariance(cloud));
  require(lam >= floor, ErrorKind::flow_degenerate,
          "covariance is near-singular: lambda_min = " + std::to_string(lam));
}

}  // namespace detail

/// grad_IGW F = L_{Sigma,mu}^{-1}[grad_W F], after projecting grad_W F onto
/// the invariant space.
inline VectorField igw_gradient_of(const PointCloud& cloud, const VectorField& grad_w,
                                   double floor = kDefaultSingularityFloor) {
  detail::require_flowable(cloud, floor);
  const auto ctx = OperatorContext::with_covariance(cloud);
  return inverse(ctx, project_invariant(cloud, grad_w)).v;
}

inline VectorField igw_gradient(const Functional& f, const PointCloud& cloud,
                                double floor = kDefaultSingularityFloor) {
  return igw_gradient_of(cloud, wasserstein_gradient(f, cloud), floor);
}

struct DescentDamping {
  double descent = 0.0;
  double damping = 0.0;
  double total = 0.0;
};

/// dF/dt along the IGW flow split as
///   descent = -1/2 <g, Sigma^{-1} g>,
///   damping = 1/2 m^T (I (x) Sigma^2 + Sigma (x) Sigma)^{-1} m,  m = vec(sum_i w_i g_i x_i^T),
/// with g the (projected) Wasserstein gradient.
inline DescentDamping descent_damping_of(const PointCloud& cloud, const VectorField& grad_w,
                                         double floor = kDefaultSingularityFloor) {
  detail::require_flowable(cloud, floor);
  const VectorField g = project_invariant(cloud, grad_w);
  const SquareMatrix sigma = covariance(cloud);
  const Eigen::Index d = cloud.dim();
  const auto lu = sigma.partialPivLu();

  DescentDamping out;
  const VectorField sg = lu.solve(g.transpose()).transpose();  // rows Sigma^{-1} g_i
  out.descent = -0.5 * l2_inner(cloud, g, sg);

  const SquareMatrix gx = moment_matrix(cloud, g).transpose();  // sum w g x^T
  const Eigen::VectorXd m = vec(gx);
  const auto eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd k = kron(eye, sigma * sigma) + kron(sigma, sigma);
  out.damping = 0.5 * m.dot(k.partialPivLu().solve(m));
  out.total = out.descent + out.damping;
  return out;
}

inline DescentDamping descent_damping(const Functional& f, const PointCloud& cloud,
                                      double floor = kDefaultSingularityFloor) {
  return descent_damping_of(cloud, wasserstein_gradient(f, cloud), floor);
}

struct FlowConfig {
  Geometry geometry = Geometry::igw;
  double tau = 0.01;
  int steps = 100;
  Functional functional{};
  double singularity_floor = kDefaultSingularityFloor;
  bool emit_velocity = false;
};

/// x <- x + tau v with v = -grad F in the chosen geometry. Every frame records
/// F, lambda_min and (when the state admits a velocity) descent and damping.
/// Stops early, with Trajectory::stop_reason set, once lambda_min(Sigma)
/// drops below the singularity floor in the IGW geometry, or when the next
/// step would carry the cloud through a singular covariance.
inline Trajectory euler_flow(const FlowConfig& cfg, const PointCloud& cloud0) {
  detail::require(cfg.tau > 0.0, ErrorKind::invalid_argument, "tau must be positive");
  detail::require(cfg.steps >= 0, ErrorKind::invalid_argument, "steps must be nonnegative");
  if (cfg.geometry == Geometry::igw) detail::require_flowable(cloud0, cfg.singularity_floor);

  Trajectory traj(cfg.tau);
  PointCloud state = cloud0;
  for (int j = 0; j <= cfg.steps; ++j) {
    Frame frame{cfg.tau * j, state, std::nullopt, {}};
    frame.scalars["F"] = value(cfg.functional, state);
    const double lam = lambda_min(covariance(state));
    frame.scalars["lambda_min"] = lam;
    if (cfg.geometry == Geometry::igw && lam < cfg.singularity_floor) {
      traj.stop_reason = "covariance near-singular at t = " + format_double(frame.t) +
                         " (lambda_min = " + format_double(lam) + ")";
      traj.push(std::move(frame));
      break;
    }

    const VectorField grad_w = wasserstein_gradient(cfg.functional, state);
    VectorField velocity;
    if (cfg.geometry == Geometry::igw) {
      const auto dd = descent_damping_of(state, grad_w, cfg.singularity_floor);
      frame.scalars["descent"] = dd.descent;
      frame.scalars["damping"] = dd.damping;
      velocity = -igw_gradient_of(state, grad_w, cfg.singularity_floor);
    } else {
      frame.scalars["descent"] = -l2_inner(state, grad_w, grad_w);
      frame.scalars["damping"] = 0.0;
      velocity = -grad_w;
    }
    if (cfg.emit_velocity) frame.velocity = velocity;
    traj.push(std::move(frame));
    if (j == cfg.steps) break;

    Eigen::MatrixXd next = state.points() + cfg.tau * velocity;
    detail::require(next.allFinite(), ErrorKind::non_finite,
                    "state became non-finite at step " + std::to_string(j + 1));
    if (cfg.geometry == Geometry::igw) {
      // A step can jump over the singular set without lambda_min ever
      // dropping below the floor; it then flips the cloud along some axis.
      const SquareMatrix cross = state.points().transpose() * state.weights().asDiagonal() * next;
      const double cross_min = lambda_min(0.5 * (cross + cross.transpose()));
      if (cross_min < cfg.singularity_floor) {
        traj.stop_reason = "step from t = " + format_double(traj.back().t) +
                           " crosses a singular covariance (cross-covariance lambda_min = " +
                           format_double(cross_min) + ")";
        break;
      }
    }
    state = state.with_points(std::move(next));
  }
  return traj;
}

struct JkoInner {
  double lr = 0.0;  ///< 0 selects 0.1 * tau
  int iters = 500;
  int replan_every = 10;
  /// Inner run counts as diverged after this many consecutive replans with
  /// an increasing objective.
  int divergence_patience = 10;
};

struct JkoDiagnostics {
  double f_before = 0.0;
  double f_after = 0.0;
  double igw_squared = 0.0;
  /// 2 tau (F_before - F_after) - IGW^2, nonnegative for a valid step.
  double step_margin = 0.0;
  bool step_ok = false;
  int replans = 0;
  /// Plan between the previous cloud and the returned one.
  Coupling plan = Coupling::identity(1);
  SquareMatrix rotation;
};

/// Inner-solver divergence, carrying the last iterate.
class JkoDivergence : public Error {
 public:
  JkoDivergence(const std::string& what, PointCloud last)
      : Error(ErrorKind::inner_divergence, what), last_(std::move(last)) {}
  const PointCloud& last_iterate() const noexcept { return last_; }

 private:
  PointCloud last_;
};

struct JkoStep {
  PointCloud cloud;
  JkoDiagnostics diagnostics;
};

namespace detail {

/// Alternating updates warm-started from the given plan until it is a fixed
/// point; never increases the IGW objective.
inline Coupling refine_plan(const PointCloud& z, const PointCloud& y, Coupling plan, int max_iters = 50) {
  double current = igw_objective(z, y, plan);
  for (int it = 0; it < max_iters; ++it) {
    const SquareMatrix a = 0.5 * cross_covariance(z, y, plan);
    auto ot = solve_ot_bilinear(z, y, a);
    const double next = igw_objective(z, y, ot.coupling);
    if (!(next < current - 1e-15 * std::max(1.0, std::abs(current)))) break;
    current = next;
    plan = std::move(ot.coupling);
  }
  return plan;
}

inline Coupling invert_plan(const Coupling& plan) {
  const auto& p = plan.permutation();
  Permutation inv(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) inv[p[k]] = static_cast<Eigen::Index>(k);
  return Coupling::from_permutation(std::move(inv));
}

}  // namespace detail

/// One minimizing-movement step
///   rho~ in argmin F(rho) + IGW(rho, rho_i)^2 / (2 tau),  rho_next = O_# rho~,
/// over particle positions. Between replans the plan pi is frozen and the
/// inner objective F(z) + IGW_pi(z, y)^2 / (2 tau) is decreased by gradient
/// descent with Wasserstein-scaled gradient
///   grad F(z_k) + (4 Sigma_z z_k - 8 A y_pi(k)) / (2 tau),  A = C_pi(z, y) / 2.
/// The objective type needs value(cloud) and gradient(cloud).
template <class Objective>
JkoStep jko_step(const Objective& f, const PointCloud& cloud_i, double tau, const JkoInner& inner = {},
                 const IGWOptions& replan_opts = {}) {
  detail::require(tau > 0.0, ErrorKind::invalid_argument, "tau must be positive");
  detail::require(cloud_i.is_uniform(), ErrorKind::unsupported_marginals, "jko_step needs a uniform cloud");
  detail::require_flowable(cloud_i, kDefaultSingularityFloor);
  const double lr = inner.lr > 0.0 ? inner.lr : 0.1 * tau;
  const int replan_every = std::max(1, inner.replan_every);
  const auto& y = cloud_i;

  PointCloud z = cloud_i;
  Coupling plan = Coupling::identity(z.size());  // z index k -> y index plan[k]
  auto objective = [&](const PointCloud& c, const Coupling& p) {
    return f.value(c) + igw_objective(c, y, p) / (2.0 * tau);
  };
  double obj = objective(z, plan);
  double last_replan_obj = obj;
  int increases = 0;
  int replans = 0;

  for (int it = 0; it < inner.iters; ++it) {
    if (it > 0 && it % replan_every == 0) {
      plan = detail::refine_plan(z, y, std::move(plan));
      ++replans;
      obj = objective(z, plan);
      increases = obj > last_replan_obj ? increases + 1 : 0;
      last_replan_obj = obj;
      if (increases >= inner.divergence_patience)
        throw JkoDivergence("inner objective increased for " + std::to_string(increases) +
                                " consecutive replans",
                            z);
    }
    const auto& py = y.points();
    const auto& perm = plan.permutation();
    Eigen::MatrixXd ypi(z.size(), z.dim());
    for (Eigen::Index k = 0; k < z.size(); ++k) ypi.row(k) = py.row(perm[k]);
    const SquareMatrix a = 0.5 * cross_covariance(z, y, plan);
    const SquareMatrix sz = covariance(z);
    const VectorField grad = f.gradient(z) + (4.0 * z.points() * sz - 8.0 * ypi * a.transpose()) / (2.0 * tau);

    // backtrack so the frozen-plan objective never increases
    double step = lr;
    bool moved = false;
    for (int tries = 0; tries < 30; ++tries, step *= 0.5) {
      Eigen::MatrixXd cand = z.points() - step * grad;
      if (!cand.allFinite()) continue;
      PointCloud next = z.with_points(std::move(cand));
      const double cand_obj = objective(next, plan);
      if (cand_obj <= obj) {
        z = std::move(next);
        obj = cand_obj;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  plan = detail::refine_plan(z, y, std::move(plan));
  ++replans;

  JkoDiagnostics diag;
  diag.f_before = f.value(cloud_i);
  diag.f_after = f.value(z);
  diag.replans = replans;
  double igw2 = igw_objective(z, y, plan);
  Coupling best_plan = plan;
  if (z.size() >= 2) {
    IGWOptions opts = replan_opts;
    opts.compute_rotation = false;
    const auto alt = igw_alternating(z, y, opts);
    if (alt.igw_squared < igw2) {
      igw2 = alt.igw_squared;
      best_plan = alt.coupling;
    }
  }
  diag.igw_squared = std::max(igw2, 0.0);

  // align z with cloud_i: plan from cloud_i (x) to z (y)
  const Coupling back = detail::invert_plan(best_plan);
  diag.rotation = psd_rotation(cloud_i, z, back);
  PointCloud aligned = apply_linear(z, diag.rotation);
  diag.plan = back;
  diag.step_margin = 2.0 * tau * (diag.f_before - diag.f_after) - diag.igw_squared;
  diag.step_ok = diag.step_margin >= -1e-8;
  // F and IGW are rotation invariant, so the diagnostics carry over
  return {std::move(aligned), std::move(diag)};
}

/// Iterates jko_step; frame scalars carry F, step_igw and step_margin.
template <class Objective>
Trajectory jko_flow(const Objective& f, const PointCloud& cloud0, double tau, int n_steps,
                    const JkoInner& inner = {}, std::vector<JkoDiagnostics>* diagnostics = nullptr) {
  detail::require(n_steps >= 0, ErrorKind::invalid_argument, "n_steps must be nonnegative");
  Trajectory traj(tau);
  Frame first{0.0, cloud0, std::nullopt, {}};
  first.scalars["F"] = f.value(cloud0);
  traj.push(std::move(first));
  PointCloud state = cloud0;
  for (int i = 0; i < n_steps; ++i) {
    auto step = jko_step(f, state, tau, inner);
    Frame frame{tau * (i + 1), step.cloud, std::nullopt, {}};
    frame.scalars["F"] = step.diagnostics.f_after;
    frame.scalars["step_igw"] = std::sqrt(step.diagnostics.igw_squared);
    frame.scalars["step_margin"] = step.diagnostics.step_margin;
    traj.push(std::move(frame));
    state = std::move(step.cloud);
    if (diagnostics) diagnostics->push_back(std::move(step.diagnostics));
  }
  return traj;
}

}  // namespace igw
