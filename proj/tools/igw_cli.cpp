// igw command-line tool. One subcommand per run; see README.md for usage.
//
// Exit codes: 0 ok, 1 usage or I/O, 2 input parse error, 3 solver
// precondition failure, 4 covariance-singularity stop, 5 JKO inner
// divergence, 6 non-finite loss or state.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "igw/igw.hpp"

#ifndef IGW_VERSION
#define IGW_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { ok = 0, usage = 1, parse_error = 2, precondition = 3, singular = 4, divergence = 5, non_finite = 6 };

int exit_code(igw::ErrorKind k) {
  switch (k) {
    case igw::ErrorKind::parse: return parse_error;
    case igw::ErrorKind::flow_degenerate: return singular;
    case igw::ErrorKind::inner_divergence: return divergence;
    case igw::ErrorKind::non_finite: return non_finite;
    default: return precondition;
  }
}

std::string fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Human summaries use 6 significant digits.
std::string h6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

json num(double v) { return std::isfinite(v) ? json(v) : json(igw::format_double(v)); }

fs::path sibling(const std::string& primary, const std::string& suffix) {
  fs::path p(primary);
  p.replace_extension(suffix);
  return p;
}

/// Collects what goes into the RunManifest while a command runs.
struct Run {
  CLI::App* sub = nullptr;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  json inputs = json::array();
  json outputs = json::array();
  json results = json::object();
  std::optional<std::uint64_t> seed;

  void input(const std::string& path) { inputs.push_back({{"path", path}, {"fnv1a64", fnv1a_file(path)}}); }

  void write(const fs::path& path, const std::string& content) {
    igw::write_file_atomic(path, content);
    outputs.push_back(path.string());
  }

  json config() const {
    json cfg = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help" || name == "config" || name == "manifest") continue;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        cfg[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (opt->get_expected_max() == 0) {
        cfg[name] = "false";
      } else {
        cfg[name] = opt->get_default_str();
      }
    }
    return cfg;
  }

  void manifest(const fs::path& path) {
    json m;
    m["command"] = sub->get_name();
    m["version"] = IGW_VERSION;
    m["config"] = config();
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["results"] = results;
    m["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    igw::write_file_atomic(path, m.dump(2) + "\n");
  }
};

// ------------------------------------------------------------------ inputs

struct CloudInput {
  std::string path;
  bool header = false;
  bool weights = false;

  igw::PointCloud load(Run& run) const {
    run.input(path);
    return igw::load_csv(path, {header, weights});
  }
};

void add_csv_flags(CLI::App* sub, CloudInput& in) {
  sub->add_flag("--header", in.header, "Skip the first line of input CSVs");
  sub->add_flag("--weights", in.weights, "Last CSV column holds point weights");
}

struct ShapeInput {
  std::string kind;
  long n = 100;
  std::uint64_t seed = 0;
  igw::ShapeParams params;
};

void add_shape_options(CLI::App* sub, ShapeInput& s) {
  sub->add_option("--n", s.n, "Number of points")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--seed", s.seed, "Random seed")->capture_default_str();
  sub->add_option("--semi-major", s.params.semi_major, "Ellipse x semi-axis")->capture_default_str();
  sub->add_option("--semi-minor", s.params.semi_minor, "Ellipse y semi-axis")->capture_default_str();
  sub->add_option("--side", s.params.side, "Square side length")->capture_default_str();
  sub->add_option("--inner-radius", s.params.inner_radius, "two_circles inner radius")->capture_default_str();
  sub->add_option("--scale", s.params.scale, "infinity / two_moons scale")->capture_default_str();
  sub->add_option("--jitter", s.params.jitter, "Std-dev of additive Gaussian noise")->capture_default_str();
  sub->add_flag("--random-parameter", s.params.random_parameter, "Random instead of equispaced curve parameters");
}

igw::PointCloud make_shape(const ShapeInput& s) {
  igw::ShapeParams p = s.params;
  p.seed = s.seed;
  return igw::generate_shape(igw::parse_shape_kind(s.kind), s.n, p);
}

/// --input file or --shape kind, exactly one.
struct SourceInput {
  CloudInput csv;
  ShapeInput shape;

  igw::PointCloud load(Run& run) const {
    if (!csv.path.empty()) return csv.load(run);
    run.seed = shape.seed;
    return make_shape(shape);
  }
};

void add_source_options(CLI::App* sub, SourceInput& src) {
  auto* in = sub->add_option("--input", src.csv.path, "Input cloud CSV");
  auto* sh = sub->add_option("--shape", src.shape.kind, "Generate the input: ellipse|square|two_moons|two_circles|infinity");
  in->excludes(sh);
  sh->excludes(in);
  add_csv_flags(sub, src.csv);
  add_shape_options(sub, src.shape);
}

igw::Functional make_functional(const std::string& name, double epsilon) {
  return {igw::parse_functional_kind(name), epsilon};
}

void write_manifest(Run& run, const std::string& explicit_path, const std::string& primary) {
  if (!explicit_path.empty()) run.manifest(explicit_path);
  else if (!primary.empty()) run.manifest(sibling(primary, ".manifest.json"));
}

// ------------------------------------------------------------------ dist

struct DistArgs {
  CloudInput a, b;
  std::string method = "alternating";
  int restarts = 8;
  std::uint64_t seed = 0;
  std::string json_out, manifest;
};

int cmd_dist(const DistArgs& args, Run& run) {
  const auto x = args.a.load(run);
  CloudInput bin = args.a;
  bin.path = args.b.path;
  const auto y = bin.load(run);
  run.seed = args.seed;

  igw::IGWOptions opts;
  opts.restarts = args.restarts;
  opts.seed = args.seed;
  const auto res = args.method == "bruteforce" ? igw::igw_bruteforce(x, y) : igw::igw_alternating(x, y, opts);
  const auto rep = igw::check_comparison_bounds(x, y, opts);

  run.results = {{"igw", res.igw()},
                 {"igw_squared", res.igw_squared},
                 {"w2", rep.w2},
                 {"upper_bound", rep.upper_bound},
                 {"lower_bound_applicable", rep.lower_applicable},
                 {"lower_bound", rep.lower_bound},
                 {"method", args.method}};
  if (!args.json_out.empty()) {
    json report = run.results;
    report["permutation"] = res.coupling.permutation();
    report["dual_A"] = igw::matrix_to_json(res.dual_A);
    run.write(args.json_out, report.dump(2) + "\n");
  }
  write_manifest(run, args.manifest, args.json_out.empty() ? "" : args.json_out);

  std::cout << "igw=" << h6(res.igw()) << " igw2=" << h6(res.igw_squared) << " w2=" << h6(rep.w2)
            << " lower=" << (rep.lower_applicable ? h6(rep.lower_bound) : std::string("n/a"))
            << " upper=" << h6(rep.upper_bound) << "\n";
  return ok;
}

// ------------------------------------------------------------------ flow

struct FlowArgs {
  SourceInput src;
  std::string functional = "potential";
  double epsilon = 0.2;
  std::string geometry = "igw";
  double tau = 0.01;
  int steps = 100;
  double floor = igw::kDefaultSingularityFloor;
  bool emit_velocity = false;
  std::string out, scalars, manifest;
};

std::string scalars_csv(const igw::Trajectory& traj) {
  std::string s = "t,F,descent,damping,lambda_min\n";
  auto get = [](const igw::Frame& f, const char* key) {
    const auto it = f.scalars.find(key);
    return igw::format_double(it == f.scalars.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
  };
  for (const auto& f : traj.frames())
    s += igw::format_double(f.t) + ',' + get(f, "F") + ',' + get(f, "descent") + ',' + get(f, "damping") + ',' +
         get(f, "lambda_min") + '\n';
  return s;
}

int cmd_flow(const FlowArgs& args, Run& run) {
  const auto cloud = args.src.load(run);
  igw::FlowConfig cfg;
  cfg.geometry = igw::parse_geometry(args.geometry);
  cfg.tau = args.tau;
  cfg.steps = args.steps;
  cfg.functional = make_functional(args.functional, args.epsilon);
  cfg.singularity_floor = args.floor;
  cfg.emit_velocity = args.emit_velocity;
  const auto traj = igw::euler_flow(cfg, cloud);

  run.write(args.out, igw::trajectory_to_json(traj).dump() + "\n");
  run.write(args.scalars.empty() ? sibling(args.out, ".scalars.csv") : fs::path(args.scalars), scalars_csv(traj));
  const double f_final = traj.back().scalars.at("F");
  const std::string stop = traj.stop_reason.empty() ? "completed" : traj.stop_reason;
  run.results = {{"frames", traj.size()}, {"F_initial", traj.front().scalars.at("F")}, {"F_final", f_final},
                 {"stop_reason", stop}};
  write_manifest(run, args.manifest, args.out);

  std::cout << "frames=" << traj.size() << " t=" << h6(traj.back().t) << " F=" << h6(f_final) << " stop=" << stop
            << "\n";
  if (!traj.stop_reason.empty()) {
    std::cerr << "igw flow: " << traj.stop_reason << "\n";
    return singular;
  }
  return ok;
}

// ------------------------------------------------------------------ jko

struct JkoArgs {
  SourceInput src;
  std::string functional = "potential";
  double epsilon = 0.2;
  double tau = 0.01;
  int steps = 5;
  igw::JkoInner inner;
  std::string out, diagnostics, manifest;
};

int cmd_jko(const JkoArgs& args, Run& run) {
  const auto cloud = args.src.load(run);
  const auto f = make_functional(args.functional, args.epsilon);
  std::vector<igw::JkoDiagnostics> diags;
  const auto traj = igw::jko_flow(f, cloud, args.tau, args.steps, args.inner, &diags);

  run.write(args.out, igw::trajectory_to_json(traj).dump() + "\n");
  std::string csv = "step,f_before,f_after,igw_squared,step_margin,step_ok,replans\n";
  bool all_ok = true;
  for (std::size_t i = 0; i < diags.size(); ++i) {
    const auto& d = diags[i];
    all_ok = all_ok && d.step_ok;
    csv += std::to_string(i + 1) + ',' + igw::format_double(d.f_before) + ',' + igw::format_double(d.f_after) + ',' +
           igw::format_double(d.igw_squared) + ',' + igw::format_double(d.step_margin) + ',' +
           (d.step_ok ? "1" : "0") + ',' + std::to_string(d.replans) + '\n';
  }
  run.write(args.diagnostics.empty() ? sibling(args.out, ".diagnostics.csv") : fs::path(args.diagnostics), csv);
  run.results = {{"frames", traj.size()}, {"F_final", traj.back().scalars.at("F")}, {"all_steps_ok", all_ok}};
  write_manifest(run, args.manifest, args.out);

  std::cout << "steps=" << diags.size() << " F=" << h6(traj.back().scalars.at("F"))
            << " step_inequality=" << (all_ok ? "ok" : "violated") << "\n";
  return ok;
}

// ------------------------------------------------------------------ match

struct MatchArgs {
  CloudInput source, target;
  igw::MatchConfig cfg;
  std::string geometry = "igw_action";
  double sigma = 0.03;
  bool no_reflection = false;
  std::uint64_t seed = 0;
  std::string out_model, out_traj, loss_csv, manifest;
};

int cmd_match(MatchArgs args, Run& run) {
  const auto x = args.source.load(run);
  CloudInput tin = args.source;
  tin.path = args.target.path;
  const auto y = tin.load(run);
  run.seed = args.seed;
  args.cfg.geometry = igw::parse_action_geometry(args.geometry);
  args.cfg.mmd.sigma = args.sigma;
  args.cfg.try_reflection = !args.no_reflection;

  const auto res = igw::train_flow_match(x, y, args.cfg, args.seed);
  const auto traj = igw::rollout(res.model, x, args.cfg.k);
  const auto& rep = res.report;

  run.write(args.out_model, igw::model_to_json(res.model).dump() + "\n");
  if (!args.out_traj.empty()) run.write(args.out_traj, igw::trajectory_to_json(traj).dump() + "\n");
  std::string csv = "epoch,total,action,mmd\n";
  for (const auto& r : rep.loss_curve)
    csv += std::to_string(r.epoch) + ',' + igw::format_double(r.total) + ',' + igw::format_double(r.action) + ',' +
           igw::format_double(r.mmd) + '\n';
  run.write(args.loss_csv.empty() ? sibling(args.out_model, ".loss.csv") : fs::path(args.loss_csv), csv);
  run.results = {{"final_mmd", rep.final_mmd},       {"final_action", rep.final_action},
                 {"final_loss", rep.final_loss},     {"reflected", rep.reflected},
                 {"early_stopped", rep.early_stopped}, {"epochs_run", rep.epochs_run},
                 {"alternative_loss", num(rep.alternative_loss)}, {"notice", rep.notice}};
  write_manifest(run, args.manifest, args.out_model);

  if (!rep.notice.empty()) std::cerr << "igw match: " << rep.notice << "\n";
  std::cout << "mmd=" << h6(rep.final_mmd) << " action=" << h6(rep.final_action) << " loss=" << h6(rep.final_loss)
            << " target=" << (rep.reflected ? "reflected" : "direct") << "\n";
  return ok;
}

// ------------------------------------------------------------------ grid-eval

struct GridArgs {
  std::string model;
  CloudInput cloud;
  double t = 0.0;
  std::vector<double> bounds{-2.0, 2.0, -2.0, 2.0};
  std::vector<int> resolution{50, 50};
  std::string out, manifest;
};

double grid_coord(double lo, double hi, int count, int i) {
  return count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (count - 1);
}

int cmd_grid(const GridArgs& args, Run& run) {
  run.input(args.model);
  json mj;
  {
    std::ifstream in(args.model);
    if (!in) throw igw::Error(igw::ErrorKind::parse, "cannot open " + args.model);
    try {
      in >> mj;
    } catch (const json::exception& e) {
      throw igw::Error(igw::ErrorKind::parse, args.model + ": " + e.what());
    }
  }
  const auto model = igw::model_from_json(mj);
  const auto cloud = args.cloud.load(run);
  const int nx = args.resolution[0];
  const int ny = args.resolution.size() > 1 ? args.resolution[1] : nx;
  if (nx < 1 || ny < 1) throw igw::Error(igw::ErrorKind::invalid_argument, "resolution must be >= 1");
  if (cloud.dim() != 2) throw igw::Error(igw::ErrorKind::dimension_mismatch, "grid-eval needs a 2-D cloud");

  Eigen::MatrixXd grid(static_cast<Eigen::Index>(nx) * ny, 2);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      grid.row(static_cast<Eigen::Index>(j) * nx + i) << grid_coord(args.bounds[0], args.bounds[1], nx, i),
          grid_coord(args.bounds[2], args.bounds[3], ny, j);
  const auto sample = igw::grid_local_cost(model, args.t, cloud, grid);

  std::string csv = "gx,gy,vx,vy,local_cost\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r)
    csv += igw::format_double(grid(r, 0)) + ',' + igw::format_double(grid(r, 1)) + ',' +
           igw::format_double(sample.velocity(r, 0)) + ',' + igw::format_double(sample.velocity(r, 1)) + ',' +
           igw::format_double(sample.local_cost(r)) + '\n';
  run.write(args.out, csv);
  run.results = {{"points", grid.rows()}, {"max_local_cost", sample.local_cost.maxCoeff()}};
  write_manifest(run, args.manifest, args.out);
  std::cout << "points=" << grid.rows() << " max_local_cost=" << h6(sample.local_cost.maxCoeff()) << "\n";
  return ok;
}

// ------------------------------------------------------------------ transform

struct TransformArgs {
  CloudInput in;
  std::optional<double> rotate_deg;
  bool reflect = false;
  std::string matrix;
  std::string out, manifest;
};

/// "a,b;c,d" -> rows separated by ';', entries by ','.
igw::SquareMatrix parse_matrix(const std::string& text, Eigen::Index d) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) {
    std::vector<double> vals;
    std::stringstream rs(row);
    std::string field;
    while (std::getline(rs, field, ',')) {
      try {
        vals.push_back(igw::detail::parse_field(field, rows.size() + 1));
      } catch (const igw::Error& e) {
        throw igw::Error(igw::ErrorKind::invalid_argument, std::string("bad matrix: ") + e.what());
      }
    }
    rows.push_back(std::move(vals));
  }
  if (static_cast<Eigen::Index>(rows.size()) != d)
    throw igw::Error(igw::ErrorKind::invalid_argument, "bad matrix: expected " + std::to_string(d) + " rows");
  igw::SquareMatrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d)
      throw igw::Error(igw::ErrorKind::invalid_argument, "bad matrix: row " + std::to_string(i + 1) + " needs " +
                                                             std::to_string(d) + " entries");
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[i][j];
  }
  if (!m.allFinite()) throw igw::Error(igw::ErrorKind::invalid_argument, "bad matrix: non-finite entry");
  return m;
}

int cmd_transform(const TransformArgs& args, Run& run) {
  const auto cloud = args.in.load(run);
  const Eigen::Index d = cloud.dim();
  igw::SquareMatrix m;
  if (args.rotate_deg) {
    if (d != 2) throw igw::Error(igw::ErrorKind::dimension_mismatch, "--rotate-deg needs a 2-D cloud");
    m = igw::rotation_2d(*args.rotate_deg * std::numbers::pi / 180.0);
  } else if (args.reflect) {
    m = igw::reflection(d);
  } else {
    m = parse_matrix(args.matrix, d);
  }
  run.write(args.out, igw::to_csv(igw::apply_linear(cloud, m), args.in.weights));
  run.results = {{"matrix", igw::matrix_to_json(m)}};
  write_manifest(run, args.manifest, args.out);
  std::cout << "points=" << cloud.size() << " d=" << d << " out=" << args.out << "\n";
  return ok;
}

// ------------------------------------------------------------------ shape

struct ShapeArgs {
  ShapeInput shape;
  std::string out, manifest;
};

int cmd_shape(const ShapeArgs& args, Run& run) {
  const auto cloud = make_shape(args.shape);
  run.seed = args.shape.seed;
  run.write(args.out, igw::to_csv(cloud));
  write_manifest(run, args.manifest, args.out);
  std::cout << "shape=" << args.shape.kind << " n=" << cloud.size() << " out=" << args.out << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inner-product Gromov-Wasserstein distances, gradient flows and flow matching"};
  app.set_version_flag("--version", IGW_VERSION);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);

  DistArgs dist;
  auto* d = app.add_subcommand("dist", "IGW and W2 distance between two clouds, with comparison bounds");
  d->add_option("input_a", dist.a.path, "First cloud CSV")->required();
  d->add_option("input_b", dist.b.path, "Second cloud CSV")->required();
  d->add_option("--method", dist.method, "alternating|bruteforce")
      ->capture_default_str()
      ->check(CLI::IsMember({"alternating", "bruteforce"}));
  d->add_option("--restarts", dist.restarts, "Alternating-solver restarts")->capture_default_str();
  d->add_option("--seed", dist.seed, "Seed for random restarts")->capture_default_str();
  d->add_option("--json", dist.json_out, "Write a JSON report here");
  d->add_option("--manifest", dist.manifest, "RunManifest path (default: next to --json)");
  add_csv_flags(d, dist.a);

  FlowArgs flow;
  auto* f = app.add_subcommand("flow", "Explicit Euler gradient flow");
  add_source_options(f, flow.src);
  f->add_option("--functional", flow.functional, "potential|coulomb|entropy")->capture_default_str();
  f->add_option("--epsilon", flow.epsilon, "Entropy smoothing epsilon")->capture_default_str();
  f->add_option("--geometry", flow.geometry, "igw|wasserstein")->capture_default_str();
  f->add_option("--tau", flow.tau, "Time step")->capture_default_str();
  f->add_option("--steps", flow.steps, "Number of steps")->capture_default_str();
  f->add_option("--singularity-floor", flow.floor, "Stop once lambda_min(Sigma) drops below this")
      ->capture_default_str();
  f->add_flag("--emit-velocity", flow.emit_velocity, "Store per-frame velocities in the trajectory");
  f->add_option("--out", flow.out, "Trajectory JSON")->required();
  f->add_option("--scalars", flow.scalars, "Scalars CSV (default: <out>.scalars.csv)");
  f->add_option("--manifest", flow.manifest, "RunManifest path (default: <out>.manifest.json)");

  JkoArgs jko;
  auto* j = app.add_subcommand("jko", "Implicit minimizing-movement steps");
  add_source_options(j, jko.src);
  j->add_option("--functional", jko.functional, "potential|coulomb|entropy")->capture_default_str();
  j->add_option("--epsilon", jko.epsilon, "Entropy smoothing epsilon")->capture_default_str();
  j->add_option("--tau", jko.tau, "Time step")->capture_default_str();
  j->add_option("--steps", jko.steps, "Number of outer steps")->capture_default_str();
  j->add_option("--lr", jko.inner.lr, "Inner learning rate (0 selects 0.1 tau)")->capture_default_str();
  j->add_option("--iters", jko.inner.iters, "Inner iterations per step")->capture_default_str();
  j->add_option("--replan-every", jko.inner.replan_every, "Inner iterations between plan updates")
      ->capture_default_str();
  j->add_option("--out", jko.out, "Trajectory JSON")->required();
  j->add_option("--diagnostics", jko.diagnostics, "Per-step CSV (default: <out>.diagnostics.csv)");
  j->add_option("--manifest", jko.manifest, "RunManifest path (default: <out>.manifest.json)");

  MatchArgs match;
  auto* m = app.add_subcommand("match", "Train a flow-matching velocity model");
  m->add_option("--source", match.source.path, "Source cloud CSV")->required();
  m->add_option("--target", match.target.path, "Target cloud CSV")->required();
  add_csv_flags(m, match.source);
  m->add_option("--geometry", match.geometry, "igw_action|w2_action")->capture_default_str();
  m->add_option("--k", match.cfg.k, "Rollout steps")->capture_default_str();
  m->add_option("--lambda", match.cfg.lambda, "MMD weight")->capture_default_str();
  m->add_option("--epochs", match.cfg.epochs, "Training epochs")->capture_default_str();
  m->add_option("--lr", match.cfg.lr, "Learning rate")->capture_default_str();
  m->add_option("--momentum", match.cfg.momentum, "Gradient-descent momentum")->capture_default_str();
  m->add_option("--patience", match.cfg.patience, "Early stop after this many epochs without improvement")
      ->capture_default_str();
  m->add_option("--hidden", match.cfg.hidden, "Hidden layer widths")->capture_default_str()->expected(1, -1);
  m->add_option("--sigma", match.sigma, "MMD base bandwidth")->capture_default_str();
  m->add_flag("--no-reflection", match.no_reflection, "Do not also train against the reflected target");
  m->add_option("--seed", match.seed, "Initialization seed")->capture_default_str();
  m->add_option("--out-model", match.out_model, "Model checkpoint JSON")->required();
  m->add_option("--out-traj", match.out_traj, "Rollout trajectory JSON");
  m->add_option("--loss-csv", match.loss_csv, "Loss curve CSV (default: <out-model>.loss.csv)");
  m->add_option("--manifest", match.manifest, "RunManifest path (default: <out-model>.manifest.json)");

  GridArgs grid;
  auto* g = app.add_subcommand("grid-eval", "Evaluate a model and its local IGW cost on a 2-D grid");
  g->add_option("--model", grid.model, "Model checkpoint JSON")->required();
  g->add_option("--cloud", grid.cloud.path, "Frame cloud CSV")->required();
  add_csv_flags(g, grid.cloud);
  g->add_option("--t", grid.t, "Time at which to evaluate the model")->capture_default_str();
  g->add_option("--bounds", grid.bounds, "xmin xmax ymin ymax")->expected(4)->capture_default_str();
  g->add_option("--resolution", grid.resolution, "nx [ny]")->expected(1, 2)->capture_default_str();
  g->add_option("--out", grid.out, "Output CSV")->required();
  g->add_option("--manifest", grid.manifest, "RunManifest path (default: <out>.manifest.json)");

  TransformArgs tr;
  auto* t = app.add_subcommand("transform", "Apply a linear map to a cloud");
  t->add_option("--input", tr.in.path, "Input cloud CSV")->required();
  add_csv_flags(t, tr.in);
  auto* rot = t->add_option("--rotate-deg", tr.rotate_deg, "Rotate a 2-D cloud by this many degrees");
  auto* refl = t->add_flag("--reflect", tr.reflect, "Apply diag(-1, 1, ..., 1)");
  auto* mat = t->add_option("--matrix", tr.matrix, "Row-major matrix, e.g. \"0,-1;1,0\"");
  auto* group = t->add_option_group("map");
  group->add_option(rot);
  group->add_option(refl);
  group->add_option(mat);
  group->require_option(1);
  t->add_option("--out", tr.out, "Output CSV")->required();
  t->add_option("--manifest", tr.manifest, "RunManifest path (default: <out>.manifest.json)");

  ShapeArgs shape;
  auto* s = app.add_subcommand("shape", "Generate a synthetic shape");
  s->add_option("--kind", shape.shape.kind, "ellipse|square|two_moons|two_circles|infinity")->required();
  add_shape_options(s, shape.shape);
  s->add_option("--out", shape.out, "Output CSV")->required();
  s->add_option("--manifest", shape.manifest, "RunManifest path (default: <out>.manifest.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  for (auto* sub : {f, j}) {
    auto& src = sub == f ? flow.src : jko.src;
    if (*sub && src.csv.path.empty() && src.shape.kind.empty()) {
      std::cerr << "igw " << sub->get_name() << ": one of --input or --shape is required\n";
      return usage;
    }
  }

  Run run;
  try {
    if (*d) return (run.sub = d, cmd_dist(dist, run));
    if (*f) return (run.sub = f, cmd_flow(flow, run));
    if (*j) return (run.sub = j, cmd_jko(jko, run));
    if (*m) return (run.sub = m, cmd_match(match, run));
    if (*g) return (run.sub = g, cmd_grid(grid, run));
    if (*t) return (run.sub = t, cmd_transform(tr, run));
    if (*s) return (run.sub = s, cmd_shape(shape, run));
  } catch (const igw::Error& e) {
    std::cerr << "igw " << run.sub->get_name() << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "igw " << run.sub->get_name() << ": " << e.what() << "\n";
    return usage;
  }
  return usage;
}
