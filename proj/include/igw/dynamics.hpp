#pragma once
/// @file dynamics.hpp
/// @brief IGW metric tensor and action, multi-bandwidth MMD, a small tanh MLP
/// velocity model, and flow matching by gradient descent through an Euler
/// rollout (reverse mode written out by hand).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "igw/cloud.hpp"
#include "igw/error.hpp"
#include "igw/linalg.hpp"
#include "igw/trajectory.hpp"

namespace igw {

// ---------------------------------------------------------------- metric

/// g_mu(v, w) = 2 sum_i w_i v_i^T Sigma w_i + 2 Tr(M_v M_w), which equals
/// <v, L_{Sigma,mu}[w]>_{L^2(mu)}.
inline double metric_tensor(const PointCloud& cloud, const VectorField& v, const VectorField& w) {
  require_field(cloud, v);
  require_field(cloud, w);
  const SquareMatrix sigma = covariance(cloud);
  return 2.0 * l2_inner(cloud, v, w * sigma) +
         2.0 * (moment_matrix(cloud, v) * moment_matrix(cloud, w)).trace();
}

enum class ActionGeometry { igw, w2 };

inline ActionGeometry parse_action_geometry(std::string_view name) {
  if (name == "igw" || name == "igw_action") return ActionGeometry::igw;
  if (name == "w2" || name == "w2_action" || name == "wasserstein") return ActionGeometry::w2;
  throw Error(ErrorKind::invalid_argument, "unknown action geometry '" + std::string(name) + "'");
}

inline const char* to_string(ActionGeometry g) { return g == ActionGeometry::igw ? "igw_action" : "w2_action"; }

/// Kinetic energy of one frame: g_mu(v, v) or |v|^2_{L^2(mu)}.
inline double kinetic_energy(const PointCloud& cloud, const VectorField& v, ActionGeometry g) {
  return g == ActionGeometry::igw ? metric_tensor(cloud, v, v) : l2_inner(cloud, v, v);
}

/// Left Riemann sum sum_{j<k} (t_{j+1} - t_j) g_{rho_j}(v_j, v_j). Every frame
/// but the last must carry a velocity.
inline double action(const Trajectory& traj, ActionGeometry g = ActionGeometry::igw) {
  detail::require(!traj.empty(), ErrorKind::invalid_argument, "empty trajectory");
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < traj.size(); ++j) {
    const auto& f = traj[j];
    detail::require(f.velocity.has_value(), ErrorKind::invalid_argument,
                    "frame " + std::to_string(j) + " has no velocity");
    s += (traj[j + 1].t - f.t) * kinetic_energy(f.cloud, *f.velocity, g);
  }
  return s;
}

// ---------------------------------------------------------------- MMD

struct MmdConfig {
  double sigma = 0.03;
  std::vector<double> multipliers{1e-4, 1e-3, 1e-2, 0.05, 0.25, 1.0, 4.0, 20.0, 100.0, 1000.0};
};

namespace detail {

/// sum_ij a_i b_j k(x_i, y_j) with k a sum of Gaussians exp(-|x-y|^2 / (2h^2)).
inline double kernel_mean(const PointCloud& a, const PointCloud& b, const MmdConfig& cfg) {
  std::vector<double> inv2h2;
  for (double m : cfg.multipliers) inv2h2.push_back(1.0 / (2.0 * cfg.sigma * m * cfg.sigma * m));
  const auto& x = a.points();
  const auto& y = b.points();
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double d2 = (x.row(i) - y.row(j)).squaredNorm();
      double k = 0.0;
      for (double c : inv2h2) k += std::exp(-d2 * c);
      row += b.weights()(j) * k;
    }
    s += a.weights()(i) * row;
  }
  return s;
}

}  // namespace detail

/// Biased (V-statistic) MMD^2, int k d(a-b) (x) (a-b). mmd(a, a) is exactly 0.
inline double mmd(const PointCloud& a, const PointCloud& b, const MmdConfig& cfg = {}) {
  detail::require(a.dim() == b.dim(), ErrorKind::dimension_mismatch, "mmd needs clouds of equal dimension");
  return detail::kernel_mean(a, a, cfg) + detail::kernel_mean(b, b, cfg) - 2.0 * detail::kernel_mean(a, b, cfg);
}

/// d mmd(a, b) / d a.points().
inline Eigen::MatrixXd mmd_gradient(const PointCloud& a, const PointCloud& b, const MmdConfig& cfg = {}) {
  detail::require(a.dim() == b.dim(), ErrorKind::dimension_mismatch, "mmd needs clouds of equal dimension");
  std::vector<double> inv_h2;
  for (double m : cfg.multipliers) inv_h2.push_back(1.0 / (cfg.sigma * m * cfg.sigma * m));
  const auto& x = a.points();
  const auto& y = b.points();
  // sum_m exp(-d2 / (2 h_m^2)) / h_m^2
  auto dk = [&](double d2) {
    double s = 0.0;
    for (double c : inv_h2) s += std::exp(-0.5 * d2 * c) * c;
    return s;
  };
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a.size(), a.dim());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    // separate sums so that identical clouds give an exactly zero gradient
    Eigen::RowVectorXd self = Eigen::RowVectorXd::Zero(a.dim());
    Eigen::RowVectorXd cross = Eigen::RowVectorXd::Zero(a.dim());
    for (Eigen::Index l = 0; l < a.size(); ++l) {
      const Eigen::RowVectorXd diff = x.row(i) - x.row(l);
      self += a.weights()(l) * dk(diff.squaredNorm()) * diff;
    }
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const Eigen::RowVectorXd diff = x.row(i) - y.row(j);
      cross += b.weights()(j) * dk(diff.squaredNorm()) * diff;
    }
    g.row(i) = 2.0 * a.weights()(i) * (cross - self);
  }
  return g;
}

// ---------------------------------------------------------------- model

struct DenseLayer {
  Eigen::MatrixXd weight;  ///< out x in
  Eigen::VectorXd bias;
};

/// v(t, x) = MLP([t, x]) with tanh hidden layers and a linear output layer.
class VelocityModel {
 public:
  VelocityModel() = default;

  /// All-zero parameters for layer sizes {d+1, hidden..., d}.
  explicit VelocityModel(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    detail::require(sizes_.size() >= 2, ErrorKind::invalid_argument, "model needs at least two layer sizes");
    detail::require(sizes_.front() == sizes_.back() + 1, ErrorKind::invalid_argument,
                    "input size must be output size + 1 (time + position)");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      layers_.push_back({Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]), Eigen::VectorXd::Zero(sizes_[l + 1])});
  }

  static std::vector<int> default_sizes(int d, std::vector<int> hidden = {50, 50}) {
    std::vector<int> s{d + 1};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(d);
    return s;
  }

  /// Weights and biases uniform in +-1/sqrt(fan_in), final layer zero.
  static VelocityModel initialized(std::vector<int> sizes, std::uint64_t seed) {
    VelocityModel m(std::move(sizes));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < m.layers_.size(); ++l) {
      auto& layer = m.layers_[l];
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
        for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = u(rng);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = u(rng);
    }
    return m;
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const noexcept { return sizes_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Layer by layer: weight row-major, then bias.
  Eigen::VectorXd params() const {
    Eigen::VectorXd p(num_params());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
        for (Eigen::Index j = 0; j < l.weight.cols(); ++j) p(k++) = l.weight(i, j);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) p(k++) = l.bias(i);
    }
    return p;
  }

  void set_params(const Eigen::VectorXd& p) {
    detail::require(p.size() == num_params(), ErrorKind::dimension_mismatch, "parameter vector has wrong size");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
        for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = p(k++);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = p(k++);
    }
  }

  /// Activations of every layer for a batch; acts[0] is the input [t, x].
  struct Cache {
    std::vector<Eigen::MatrixXd> acts;
  };

  Eigen::MatrixXd forward(double t, const Eigen::MatrixXd& x, Cache* cache = nullptr) const {
    detail::require(x.cols() + 1 == input_dim(), ErrorKind::dimension_mismatch,
                    "model expects d = " + std::to_string(input_dim() - 1));
    Eigen::MatrixXd h(x.rows(), x.cols() + 1);
    h.col(0).setConstant(t);
    h.rightCols(x.cols()) = x;
    if (cache) cache->acts.assign(1, h);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = h * layers_[l].weight.transpose();
      z.rowwise() += layers_[l].bias.transpose();
      if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
      h = std::move(z);
      if (cache) cache->acts.push_back(h);
    }
    return h;
  }

  /// Reverse pass for output cotangent dout: accumulates parameter gradients
  /// (same flattening as params()) into grad and returns d/dx.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dout, Eigen::VectorXd& grad) const {
    std::vector<Eigen::Index> offset(layers_.size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      offset[l] = k;
      k += layers_[l].weight.size() + layers_[l].bias.size();
    }
    Eigen::MatrixXd dz = dout;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Eigen::MatrixXd& in = cache.acts[l];
      const Eigen::MatrixXd dw = dz.transpose() * in;  // out x in
      const Eigen::VectorXd db = dz.colwise().sum().transpose();
      Eigen::Index p = offset[l];
      for (Eigen::Index i = 0; i < dw.rows(); ++i)
        for (Eigen::Index j = 0; j < dw.cols(); ++j) grad(p++) += dw(i, j);
      for (Eigen::Index i = 0; i < db.size(); ++i) grad(p++) += db(i);
      Eigen::MatrixXd dh = dz * layers_[l].weight;
      if (l > 0) dz = dh.array() * (1.0 - in.array().square());
      else dz = std::move(dh);
    }
    return dz.rightCols(dz.cols() - 1);
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

 private:
  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
};

inline VectorField model_eval(const VelocityModel& m, double t, const PointCloud& cloud) {
  return m.forward(t, cloud.points());
}

inline nlohmann::json model_to_json(const VelocityModel& m) {
  nlohmann::json j;
  j["sizes"] = m.sizes();
  j["activation"] = "tanh";
  auto layers = nlohmann::json::array();
  for (const auto& l : m.layers()) {
    std::vector<double> w;
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index k = 0; k < l.weight.cols(); ++k) w.push_back(l.weight(i, k));
    layers.push_back({{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  j["layers"] = std::move(layers);
  return j;
}

inline VelocityModel model_from_json(const nlohmann::json& j) {
  try {
    VelocityModel m(j.at("sizes").get<std::vector<int>>());
    const auto& layers = j.at("layers");
    detail::require(layers.size() == m.layers().size(), ErrorKind::parse, "layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& dst = m.layers()[l];
      const auto w = layers[l].at("weight").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      detail::require(w.size() == static_cast<std::size_t>(dst.weight.size()) &&
                          b.size() == static_cast<std::size_t>(dst.bias.size()),
                      ErrorKind::parse, "layer " + std::to_string(l) + " has wrong parameter count");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < dst.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < dst.weight.cols(); ++c) dst.weight(r, c) = w[k++];
      for (Eigen::Index r = 0; r < dst.bias.size(); ++r) dst.bias(r) = b[r];
    }
    detail::require(m.all_finite(), ErrorKind::parse, "model parameters are not finite");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("model json: ") + e.what());
  }
}

// ---------------------------------------------------------------- rollout

/// k Euler steps of size 1/k on the model field; frames at t_j = j/k with
/// velocities.
inline Trajectory rollout(const VelocityModel& m, const PointCloud& cloud0, int k) {
  detail::require(k >= 1, ErrorKind::invalid_argument, "rollout needs k >= 1");
  const double h = 1.0 / k;
  Trajectory traj(h);
  PointCloud state = cloud0;
  for (int j = 0; j <= k; ++j) {
    const double t = static_cast<double>(j) / k;
    VectorField v = m.forward(t, state.points());
    detail::require(v.allFinite(), ErrorKind::non_finite, "model output non-finite at step " + std::to_string(j));
    Eigen::MatrixXd next = state.points() + h * v;
    traj.push({t, state, std::move(v), {}});
    if (j == k) break;
    detail::require(next.allFinite(), ErrorKind::non_finite, "state non-finite at step " + std::to_string(j + 1));
    state = state.with_points(std::move(next));
  }
  return traj;
}

// ---------------------------------------------------------------- training

struct MatchConfig {
  int k = 10;
  double lambda = 100.0;
  int epochs = 2000;
  double lr = 0.01;
  double momentum = 0.0;
  MmdConfig mmd{};
  ActionGeometry geometry = ActionGeometry::igw;
  bool try_reflection = true;
  /// Early stop after this many epochs without a new best loss.
  int patience = 500;
  std::vector<int> hidden{50, 50};
};

struct LossTerms {
  double total = 0.0;
  double action = 0.0;
  double mmd = 0.0;
};

namespace detail {

/// d g / d v and d g / d x for the per-frame kinetic energy.
inline void kinetic_gradients(const PointCloud& cloud, const VectorField& v, ActionGeometry g, Eigen::MatrixXd& dv,
                              Eigen::MatrixXd& dx) {
  const auto& w = cloud.weights();
  const auto& x = cloud.points();
  if (g == ActionGeometry::w2) {
    dv = 2.0 * (w.asDiagonal() * v);
    dx = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    return;
  }
  const SquareMatrix sigma = covariance(cloud);
  const SquareMatrix m = moment_matrix(cloud, v);
  SquareMatrix q = SquareMatrix::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) q += w(i) * v.row(i).transpose() * v.row(i);
  dv = 4.0 * (w.asDiagonal() * (v * sigma + x * m.transpose()));
  dx = 4.0 * (w.asDiagonal() * (x * q + v * m));
}

}  // namespace detail

/// Loss (1/k) sum_{j<k} g(v_j, v_j) + lambda MMD(rho_k, target) and, when
/// grad is given, its gradient in the model parameters.
inline LossTerms flow_match_loss(const VelocityModel& m, const PointCloud& source, const PointCloud& target,
                                 const MatchConfig& cfg, Eigen::VectorXd* grad = nullptr) {
  const int k = cfg.k;
  detail::require(k >= 1, ErrorKind::invalid_argument, "k must be >= 1");
  const double h = 1.0 / k;
  std::vector<PointCloud> states{source};
  std::vector<Eigen::MatrixXd> vels;
  std::vector<VelocityModel::Cache> caches(k);
  LossTerms out;
  for (int j = 0; j < k; ++j) {
    const auto& s = states.back();
    Eigen::MatrixXd v = m.forward(static_cast<double>(j) / k, s.points(), grad ? &caches[j] : nullptr);
    out.action += h * kinetic_energy(s, v, cfg.geometry);
    Eigen::MatrixXd next = s.points() + h * v;
    if (!next.allFinite()) {
      out.total = std::numeric_limits<double>::quiet_NaN();
      return out;
    }
    states.push_back(s.with_points(std::move(next)));
    vels.push_back(std::move(v));
  }
  out.mmd = mmd(states.back(), target, cfg.mmd);
  out.total = out.action + cfg.lambda * out.mmd;
  if (!grad) return out;

  grad->setZero(m.num_params());
  Eigen::MatrixXd xbar = cfg.lambda * mmd_gradient(states.back(), target, cfg.mmd);
  Eigen::MatrixXd gv, gx;
  for (int j = k - 1; j >= 0; --j) {
    detail::kinetic_gradients(states[j], vels[j], cfg.geometry, gv, gx);
    const Eigen::MatrixXd vbar = h * xbar + h * gv;
    xbar += h * gx + m.backward(caches[j], vbar, *grad);
  }
  return out;
}

struct LossRecord {
  int epoch = 0;
  double total = 0.0;
  double action = 0.0;
  double mmd = 0.0;
};

struct MatchReport {
  std::vector<LossRecord> loss_curve;
  double final_mmd = 0.0;
  double final_action = 0.0;
  double final_loss = 0.0;
  /// Target actually used: the given one or its reflection diag(-1, 1, ...).
  bool reflected = false;
  bool early_stopped = false;
  int epochs_run = 0;
  std::string notice;
  /// Final loss of the run against the other target (NaN if not tried).
  double alternative_loss = std::numeric_limits<double>::quiet_NaN();
};

struct MatchResult {
  VelocityModel model;
  MatchReport report;
};

/// Plain (optionally momentum) gradient descent on one target; the model
/// with the lowest loss seen is returned.
inline MatchResult train_against(const PointCloud& source, const PointCloud& target, const MatchConfig& cfg,
                                 std::uint64_t seed) {
  detail::require(source.dim() == target.dim(), ErrorKind::dimension_mismatch, "clouds must share d");
  detail::require(cfg.lambda >= 0.0 && cfg.epochs >= 0 && cfg.lr > 0.0, ErrorKind::invalid_argument,
                  "invalid training configuration");
  auto model = VelocityModel::initialized(VelocityModel::default_sizes(static_cast<int>(source.dim()), cfg.hidden),
                                          seed);
  Eigen::VectorXd params = model.params();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad(params.size());
  Eigen::VectorXd best_params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  MatchResult res;
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    model.set_params(params);
    const LossTerms loss = flow_match_loss(model, source, target, cfg, &grad);
    if (!std::isfinite(loss.total) || !grad.allFinite())
      throw Error(ErrorKind::non_finite, "loss became non-finite at epoch " + std::to_string(epoch));
    res.report.loss_curve.push_back({epoch, loss.total, loss.action, loss.mmd});
    res.report.epochs_run = epoch;
    if (loss.total < best) {
      best = loss.total;
      best_params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.report.early_stopped = true;
      res.report.notice = "no improvement for " + std::to_string(cfg.patience) + " epochs, stopped at epoch " +
                          std::to_string(epoch);
      break;
    }
    if (epoch == cfg.epochs) break;
    velocity = cfg.momentum * velocity - cfg.lr * grad;
    params += velocity;
  }
  model.set_params(best_params);
  const LossTerms fin = flow_match_loss(model, source, target, cfg);
  res.report.final_loss = fin.total;
  res.report.final_mmd = fin.mmd;
  res.report.final_action = fin.action;
  res.model = std::move(model);
  return res;
}

/// Trains against target and, with try_reflection, against its reflection;
/// the lower final loss wins.
inline MatchResult train_flow_match(const PointCloud& source, const PointCloud& target, const MatchConfig& cfg,
                                    std::uint64_t seed) {
  auto direct = train_against(source, target, cfg, seed);
  if (!cfg.try_reflection) return direct;
  auto mirrored = train_against(source, apply_linear(target, reflection(target.dim())), cfg, seed);
  if (mirrored.report.final_loss < direct.report.final_loss) {
    mirrored.report.reflected = true;
    mirrored.report.alternative_loss = direct.report.final_loss;
    return mirrored;
  }
  direct.report.alternative_loss = mirrored.report.final_loss;
  return direct;
}

// ---------------------------------------------------------------- grid

/// Per grid point: the model velocity and <v(x), 2(Sigma v(x) + M_v x)>, with
/// Sigma and M_v taken from the model evaluated on the cloud at time t.
struct GridSample {
  Eigen::MatrixXd velocity;
  Eigen::VectorXd local_cost;
};

inline GridSample grid_local_cost(const VelocityModel& m, double t, const PointCloud& cloud,
                                  const Eigen::MatrixXd& grid) {
  detail::require(grid.cols() == cloud.dim() && m.output_dim() == cloud.dim(), ErrorKind::dimension_mismatch,
                  "model, cloud and grid dimensions differ");
  const SquareMatrix sigma = covariance(cloud);
  const SquareMatrix mv = moment_matrix(cloud, model_eval(m, t, cloud));
  GridSample out;
  out.velocity = m.forward(t, grid);
  out.local_cost.resize(grid.rows());
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const Eigen::VectorXd v = out.velocity.row(i).transpose();
    const Eigen::VectorXd lv = 2.0 * (sigma * v + mv * grid.row(i).transpose());
    out.local_cost(i) = v.dot(lv);
  }
  return out;
}

}  // namespace igw
