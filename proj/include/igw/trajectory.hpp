#pragma once
/// @file trajectory.hpp
/// @brief Time-stamped sequence of clouds with optional velocities and scalar
/// diagnostics.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "igw/cloud.hpp"
#include "igw/error.hpp"

namespace igw {

struct Frame {
  double t = 0.0;
  PointCloud cloud;
  std::optional<VectorField> velocity;
  std::map<std::string, double> scalars;
};

class Trajectory {
 public:
  explicit Trajectory(double tau = 0.0) : tau_(tau) {}

  /// Appends a frame; t must strictly increase and (n, d) must not change.
  void push(Frame frame) {
    if (!frames_.empty()) {
      const auto& last = frames_.back();
      detail::require(frame.t > last.t, ErrorKind::invalid_argument, "frame times must strictly increase");
      detail::require(frame.cloud.size() == last.cloud.size() && frame.cloud.dim() == last.cloud.dim(),
                      ErrorKind::dimension_mismatch, "all frames must share n and d");
    }
    if (frame.velocity) require_field(frame.cloud, *frame.velocity);
    frames_.push_back(std::move(frame));
  }

  const std::vector<Frame>& frames() const noexcept { return frames_; }
  std::vector<Frame>& frames() noexcept { return frames_; }
  std::size_t size() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }
  const Frame& front() const { return frames_.front(); }
  const Frame& back() const { return frames_.back(); }
  const Frame& operator[](std::size_t i) const { return frames_[i]; }

  double tau() const noexcept { return tau_; }
  Eigen::Index dim() const { return frames_.empty() ? 0 : frames_.front().cloud.dim(); }

  /// Why integration stopped early, empty if it ran to completion.
  std::string stop_reason;

 private:
  double tau_;
  std::vector<Frame> frames_;
};

}  // namespace igw
