#pragma once
/// @file io.hpp
/// @brief Point-cloud CSV and trajectory JSON files.
///
/// CSV: one point per line, `x1,...,xd[,w]`, comma separated, no header by
/// default. Numbers are written with 17 significant digits.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "igw/cloud.hpp"
#include "igw/error.hpp"
#include "igw/format.hpp"
#include "igw/trajectory.hpp"

namespace igw {

struct CsvOptions {
  bool header = false;        ///< skip the first line
  bool weight_column = false; ///< last column holds the point weights
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_field(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw Error(ErrorKind::parse, "line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

}  // namespace detail

inline PointCloud parse_csv(std::istream& in, const CsvOptions& opt = {}) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (opt.header && lineno == 1) continue;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = body.find(',', start);
      row.push_back(detail::parse_field(body.substr(start, comma - start), lineno));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorKind::parse, "line " + std::to_string(lineno) + ": expected " +
                                        std::to_string(rows.front().size()) + " columns, got " +
                                        std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  detail::require(!rows.empty(), ErrorKind::parse, "no data rows");
  const auto cols = static_cast<Eigen::Index>(rows.front().size());
  const Eigen::Index d = opt.weight_column ? cols - 1 : cols;
  detail::require(d >= 1, ErrorKind::parse, "weight column needs at least one coordinate column");

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd pts(n, d);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index a = 0; a < d; ++a) pts(i, a) = rows[i][a];
    if (opt.weight_column) w(i) = rows[i][d];
  }
  try {
    if (!opt.weight_column) return PointCloud::uniform(std::move(pts));
    return PointCloud(std::move(pts), std::move(w));
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, e.what());
  }
}

inline PointCloud load_csv(const std::filesystem::path& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), ErrorKind::parse, "cannot open " + path.string());
  try {
    return parse_csv(in, opt);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

inline std::string to_csv(const PointCloud& cloud, bool write_weights = false) {
  std::string out;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (Eigen::Index a = 0; a < cloud.dim(); ++a) {
      if (a) out += ',';
      out += format_double(cloud.points()(i, a));
    }
    if (write_weights) out += ',' + format_double(cloud.weights()(i));
    out += '\n';
  }
  return out;
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    detail::require(static_cast<bool>(out), ErrorKind::invalid_argument, "cannot write " + tmp.string());
    out << content;
    out.flush();
    detail::require(static_cast<bool>(out), ErrorKind::invalid_argument, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_csv(const std::filesystem::path& path, const PointCloud& cloud, bool write_weights = false) {
  write_file_atomic(path, to_csv(cloud, write_weights));
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  detail::require(j.is_array() && !j.empty() && j[0].is_array(), ErrorKind::parse, "expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    detail::require(j[i].size() == static_cast<std::size_t>(cols), ErrorKind::parse, "ragged array");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json out;
  out["d"] = traj.dim();
  out["tau"] = traj.tau();
  auto frames = nlohmann::json::array();
  for (const auto& f : traj.frames()) {
    nlohmann::json jf;
    jf["t"] = f.t;
    jf["points"] = matrix_to_json(f.cloud.points());
    jf["velocity"] = f.velocity ? matrix_to_json(*f.velocity) : nlohmann::json(nullptr);
    jf["scalars"] = f.scalars;
    frames.push_back(std::move(jf));
  }
  out["frames"] = std::move(frames);
  if (!traj.stop_reason.empty()) out["stop_reason"] = traj.stop_reason;
  return out;
}

/// Frames are rebuilt with uniform weights.
inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  try {
    Trajectory traj(j.at("tau").get<double>());
    for (const auto& jf : j.at("frames")) {
      Frame f{jf.at("t").get<double>(), PointCloud::uniform(matrix_from_json(jf.at("points"))), {}, {}};
      if (!jf.at("velocity").is_null()) f.velocity = matrix_from_json(jf.at("velocity"));
      f.scalars = jf.at("scalars").get<std::map<std::string, double>>();
      traj.push(std::move(f));
    }
    if (j.contains("stop_reason")) traj.stop_reason = j["stop_reason"].get<std::string>();
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("trajectory json: ") + e.what());
  }
}

inline void save_trajectory_json(const std::filesystem::path& path, const Trajectory& traj) {
  write_file_atomic(path, trajectory_to_json(traj).dump(1) + "\n");
}

inline Trajectory load_trajectory_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), ErrorKind::parse, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  return trajectory_from_json(j);
}

}  // namespace igw
