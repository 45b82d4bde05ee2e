#include "dtq/config_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtq/errors.hpp"
#include "dtq/trapezoid.hpp"

namespace dtq {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Per-dimension defaults for the solver knobs that scale with N.
struct DefaultsRow {
  int lp_q, laplace_nn, candidate_size;
};
constexpr DefaultsRow kDimDefaults[5] = {
    {6, 20, 50}, {10, 20, 150}, {15, 150, 150}, {15, 200, 250}, {40, 300, 450}};

[[noreturn]] void fail(const std::vector<std::string>& problems) {
  std::string msg = "invalid config";
  const char* sep = ": ";
  for (const std::string& p : problems) {
    msg += sep;
    msg += p;
    sep = "; ";
  }
  throw ValidationError(msg);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write to " + path);
}

ordered errors_json(const std::optional<ErrorReport>& e) {
  if (!e) return nullptr;
  ordered out;
  out["l2p"] = e->l2p;
  out["l2"] = e->l2;
  out["l1"] = e->l1;
  out["linf"] = e->linf;
  return out;
}

ordered steps_json(const std::vector<StepStats>& stats) {
  ordered arr = ordered::array();
  for (const StepStats& s : stats) {
    ordered row;
    row["step"] = s.step;
    row["mesh_size"] = s.mesh_size;
    row["reuse"] = s.reuse;
    row["alt"] = s.alt;
    row["fresh"] = s.fresh;
    row["added"] = s.added;
    row["removed"] = s.removed;
    row["seconds"] = s.seconds;
    arr.push_back(std::move(row));
  }
  return arr;
}

ordered opt_json(const std::optional<double>& v) { return v ? ordered(*v) : ordered(nullptr); }

// The manifest fields a stepped adaptive run produces.
ordered adaptive_block(const RunResult& r) {
  ordered b;
  b["steps"] = steps_json(r.stats);
  b["errors_final"] = errors_json(r.errors_final);
  b["avg_leja_reuse_pct"] = opt_json(r.avg_reuse_pct);
  b["avg_alt_pct"] = opt_json(r.avg_alt_pct);
  b["peak_mesh_size"] = r.peak_mesh_size;
  b["wall_seconds"] = r.wall_seconds;
  return b;
}

void write_manifest(const std::string& dir, const ordered& manifest) {
  write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

// Every requested time that produced no snapshot gets one stderr line; times
// beyond the simulated horizon are the common case, mid-step times the odd one.
void warn_skipped_snapshots(const AppConfig& cfg, const std::vector<double>& produced) {
  for (double t : cfg.solver.snapshot_times) {
    bool hit = false;
    for (double p : produced) hit = hit || p == t;
    if (hit) continue;
    if (t < 0.0 || t > cfg.solver.end_time)
      std::cerr << "warning: snapshot time " << t << " outside [0, " << cfg.solver.end_time
                << "], skipped\n";
    else
      std::cerr << "warning: snapshot time " << t << " does not land on a computed step, skipped\n";
  }
}

Matrix grid_points(const TensorGrid& grid) {
  Matrix pts(grid.size(), grid.dim);
  for (std::int64_t i = 0; i < grid.size(); ++i) pts.row(i) = grid.point(i).transpose();
  return pts;
}

int run_adaptive_mode(const AppConfig& cfg) {
  AdaptiveSolver solver(cfg.solver);
  RunResult r = solver.run();
  std::vector<double> produced;
  for (const MeshSnapshot& snap : r.snapshots) {
    write_snapshot(cfg.output_dir, snap.time, snap.points, snap.densities);
    produced.push_back(snap.time);
  }
  warn_skipped_snapshots(cfg, produced);

  ordered manifest;
  manifest["config"] = ordered::parse(write_config(cfg));
  ordered block = adaptive_block(r);
  for (auto it = block.begin(); it != block.end(); ++it) manifest[it.key()] = it.value();
  manifest["aborted"] = r.aborted;
  if (r.aborted) manifest["abort_reason"] = r.abort_reason;
  write_manifest(cfg.output_dir, manifest);
  return r.aborted ? 3 : 0;
}

int run_trapezoid_mode(const AppConfig& cfg) {
  const SolverConfig& s = cfg.solver;
  const int dim = s.problem.dim;
  TensorGrid grid = tensor_mesh_from_adaptive(Vector::Constant(dim, -s.radius),
                                              Vector::Constant(dim, s.radius), *cfg.buffer,
                                              *cfg.kappa);
  ordered manifest;
  manifest["config"] = ordered::parse(write_config(cfg));
  manifest["grid_counts"] = grid.counts;
  try {
    TrapezoidRun run =
        run_trapezoid(grid, s.problem, s.h, s.end_time, s.snapshot_times, s.threads);
    Matrix pts = grid_points(grid);
    std::vector<double> produced;
    for (const auto& [t, values] : run.snapshots) {
      write_snapshot(cfg.output_dir, t, pts, values);
      produced.push_back(t);
    }
    warn_skipped_snapshots(cfg, produced);
    manifest["steps"] = ordered::array();
    manifest["errors_final"] = errors_json(run.errors_final);
    manifest["avg_leja_reuse_pct"] = nullptr;
    manifest["avg_alt_pct"] = nullptr;
    manifest["peak_mesh_size"] = grid.size();
    manifest["wall_seconds"] = run.wall_seconds;
    manifest["aborted"] = false;
    write_manifest(cfg.output_dir, manifest);
    return 0;
  } catch (const ResourceLimitError& e) {
    manifest["steps"] = ordered::array();
    manifest["aborted"] = true;
    manifest["abort_reason"] = e.what();
    manifest["estimated_bytes"] = e.estimated_bytes;
    write_manifest(cfg.output_dir, manifest);
    return 3;
  }
}

int run_compare_mode(const AppConfig& cfg) {
  const SolverConfig& s = cfg.solver;
  const std::string adaptive_dir = cfg.output_dir + "/adaptive";
  const std::string tensor_dir = cfg.output_dir + "/trapezoid";
  fs::create_directories(adaptive_dir);
  fs::create_directories(tensor_dir);

  AdaptiveSolver solver(cfg.solver);
  RunResult a = solver.run();
  std::vector<double> produced;
  for (const MeshSnapshot& snap : a.snapshots) {
    write_snapshot(adaptive_dir, snap.time, snap.points, snap.densities);
    produced.push_back(snap.time);
  }
  warn_skipped_snapshots(cfg, produced);

  ordered manifest;
  manifest["config"] = ordered::parse(write_config(cfg));
  manifest["adaptive"] = adaptive_block(a);
  if (a.aborted) {
    manifest["aborted"] = true;
    manifest["abort_reason"] = a.abort_reason;
    write_manifest(cfg.output_dir, manifest);
    return 3;
  }

  // Reference grid covers everything the adaptive mesh ever touched.
  TensorGrid grid = tensor_mesh_from_adaptive(a.extent_min, a.extent_max, *cfg.buffer, *cfg.kappa);
  TrapezoidRun tr;
  try {
    tr = run_trapezoid(grid, s.problem, s.h, s.end_time, s.snapshot_times, s.threads);
  } catch (const ResourceLimitError& e) {
    manifest["aborted"] = true;
    manifest["abort_reason"] = e.what();
    manifest["estimated_bytes"] = e.estimated_bytes;
    write_manifest(cfg.output_dir, manifest);
    return 3;
  }
  {
    Matrix pts = grid_points(grid);
    for (const auto& [t, values] : tr.snapshots) write_snapshot(tensor_dir, t, pts, values);
  }

  ordered tblock;
  tblock["grid_counts"] = grid.counts;
  tblock["grid_points"] = grid.size();
  tblock["errors_final"] = errors_json(tr.errors_final);
  tblock["wall_seconds"] = tr.wall_seconds;
  manifest["trapezoid"] = tblock;

  // Final-time discrepancy at the adaptive points where the reference still
  // carries visible mass.
  std::vector<double> ref, mine;
  for (int i = 0; i < a.final_points.rows(); ++i) {
    const double rv = grid.interpolate(tr.final_density, a.final_points.row(i).transpose());
    if (rv > 1e-3) {
      ref.push_back(rv);
      mine.push_back(a.final_densities[static_cast<std::size_t>(i)]);
    }
  }
  ordered disc;
  if (!ref.empty()) {
    const ErrorReport rep = error_norms(ref, mine);
    disc = errors_json(rep);
  }
  disc["points"] = static_cast<std::int64_t>(ref.size());
  manifest["discrepancy"] = disc;
  manifest["aborted"] = false;
  write_manifest(cfg.output_dir, manifest);
  return 0;
}

} // namespace

AppConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");

  std::vector<std::string> problems;
  auto num = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_number()) {
      problems.push_back(std::string(key) + " must be a number");
      return std::nullopt;
    }
    return it->get<double>();
  };
  auto integer = [&](const char* key) -> std::optional<int> {
    auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_number_integer()) {
      problems.push_back(std::string(key) + " must be an integer");
      return std::nullopt;
    }
    return it->get<int>();
  };
  auto str = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_string()) {
      problems.push_back(std::string(key) + " must be a string");
      return std::nullopt;
    }
    return it->get<std::string>();
  };

  static const std::set<std::string> known = {
      "problem",   "dim",        "h",          "end_time",       "beta",
      "delta_min", "delta_max",  "radius",     "epsilon",        "cond_alt",
      "lp_q",      "laplace_nn", "candidate_size", "step_ac",    "step_a",
      "step_rc",   "step_r",     "snapshot_times", "output_dir", "mode",
      "kappa",     "buffer"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) problems.push_back("unknown key \"" + it.key() + "\"");

  AppConfig cfg;
  if (auto m = str("mode")) {
    if (*m != "adaptive" && *m != "trapezoid" && *m != "compare")
      problems.push_back("mode must be adaptive, trapezoid or compare");
    else
      cfg.mode = *m;
  }
  if (auto o = str("output_dir")) cfg.output_dir = *o;

  SolverConfig& s = cfg.solver;
  if (auto pname = str("problem")) {
    cfg.problem_name = *pname;
    try {
      s.problem = builtin_problem(*pname);
    } catch (const std::exception& e) {
      problems.push_back(e.what());
    }
  } else if (j.find("problem") == j.end()) {
    problems.push_back("problem is required");
  }
  if (auto d = integer("dim"); d && s.problem.dim > 0 && *d != s.problem.dim)
    problems.push_back("dim " + std::to_string(*d) + " does not match problem dimension " +
                       std::to_string(s.problem.dim));

  auto required_num = [&](const char* key, double& slot) {
    if (auto v = num(key))
      slot = *v;
    else if (j.find(key) == j.end())
      problems.push_back(std::string(key) + " is required");
  };
  required_num("h", s.h);
  required_num("end_time", s.end_time);
  required_num("beta", s.beta);
  required_num("delta_min", s.delta_min);
  required_num("delta_max", s.delta_max);
  required_num("radius", s.radius);
  s.epsilon = num("epsilon").value_or(0.1);
  s.cond_alt = num("cond_alt").value_or(5.0);

  const std::optional<int> lp = integer("lp_q");
  const std::optional<int> nn = integer("laplace_nn");
  const std::optional<int> cs = integer("candidate_size");
  const int dim = s.problem.dim;
  if (dim >= 1 && dim <= 5) {
    const DefaultsRow& row = kDimDefaults[dim - 1];
    s.lp_q = lp.value_or(row.lp_q);
    s.laplace_nn = nn.value_or(row.laplace_nn);
    s.candidate_size = cs.value_or(row.candidate_size);
  } else {
    if (lp) s.lp_q = *lp; else problems.push_back("lp_q has no default above dimension 5");
    if (nn) s.laplace_nn = *nn; else problems.push_back("laplace_nn has no default above dimension 5");
    if (cs) s.candidate_size = *cs; else problems.push_back("candidate_size has no default above dimension 5");
  }
  s.step_ac = integer("step_ac").value_or(1);
  s.step_a = integer("step_a").value_or(1);
  s.step_rc = integer("step_rc").value_or(10);
  s.step_r = integer("step_r").value_or(10);

  if (auto it = j.find("snapshot_times"); it != j.end()) {
    if (!it->is_array()) {
      problems.push_back("snapshot_times must be an array of numbers");
    } else {
      for (const auto& v : *it) {
        if (!v.is_number()) {
          problems.push_back("snapshot_times must be an array of numbers");
          break;
        }
        s.snapshot_times.push_back(v.get<double>());
      }
    }
  }

  const bool tensor_mode = cfg.mode != "adaptive";
  if (auto v = num("kappa")) {
    if (!tensor_mode)
      problems.push_back("kappa is only valid in trapezoid or compare mode");
    else if (*v <= 0)
      problems.push_back("kappa must be positive");
    else
      cfg.kappa = *v;
  }
  if (auto v = num("buffer")) {
    if (!tensor_mode)
      problems.push_back("buffer is only valid in trapezoid or compare mode");
    else if (*v < 0)
      problems.push_back("buffer must be nonnegative");
    else
      cfg.buffer = *v;
  }
  if (tensor_mode && !cfg.buffer) cfg.buffer = 0.0;

  if (!problems.empty()) fail(problems);
  validate(s);
  return cfg;
}

AppConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string write_config(const AppConfig& cfg) {
  const SolverConfig& s = cfg.solver;
  ordered j;
  j["problem"] = cfg.problem_name;
  j["dim"] = s.problem.dim;
  j["mode"] = cfg.mode;
  j["output_dir"] = cfg.output_dir;
  j["h"] = s.h;
  j["end_time"] = s.end_time;
  j["beta"] = s.beta;
  j["delta_min"] = s.delta_min;
  j["delta_max"] = s.delta_max;
  j["radius"] = s.radius;
  j["epsilon"] = s.epsilon;
  j["cond_alt"] = s.cond_alt;
  j["lp_q"] = s.lp_q;
  j["laplace_nn"] = s.laplace_nn;
  j["candidate_size"] = s.candidate_size;
  j["step_ac"] = s.step_ac;
  j["step_a"] = s.step_a;
  j["step_rc"] = s.step_rc;
  j["step_r"] = s.step_r;
  j["snapshot_times"] = s.snapshot_times;
  if (cfg.kappa) j["kappa"] = *cfg.kappa;
  if (cfg.buffer) j["buffer"] = *cfg.buffer;
  return j.dump(2) + "\n";
}

std::string snapshot_filename(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "snapshot_%.6f.csv", t);
  return buf;
}

void write_snapshot(const std::string& dir, double t, const Matrix& points,
                    const std::vector<double>& densities) {
  if (points.rows() != static_cast<Eigen::Index>(densities.size()))
    throw std::invalid_argument("snapshot points/densities size mismatch");
  std::ostringstream out;
  out << "t";
  for (int c = 0; c < points.cols(); ++c) out << ",x" << (c + 1);
  out << ",p\n";
  char num[40];
  auto put = [&](double v) {
    std::snprintf(num, sizeof num, "%.17g", v);
    out << num;
  };
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    put(t);
    for (int c = 0; c < points.cols(); ++c) {
      out << ',';
      put(points(r, c));
    }
    out << ',';
    put(densities[static_cast<std::size_t>(r)]);
    out << '\n';
  }
  write_text_file(dir + "/" + snapshot_filename(t), out.str());
}

int run_app(const AppConfig& config) {
  AppConfig cfg = config;
  if (cfg.mode != "adaptive") {
    if (!cfg.kappa)
      throw ValidationError("kappa is required in " + cfg.mode + " mode (config key or --kappa)");
    if (*cfg.kappa <= 0) throw ValidationError("kappa must be positive");
    if (cfg.buffer && *cfg.buffer < 0) throw ValidationError("buffer must be nonnegative");
    if (!cfg.buffer) cfg.buffer = 0.0;
  }
  fs::create_directories(cfg.output_dir);
  if (cfg.mode == "adaptive") return run_adaptive_mode(cfg);
  if (cfg.mode == "trapezoid") return run_trapezoid_mode(cfg);
  if (cfg.mode == "compare") return run_compare_mode(cfg);
  throw ValidationError("mode must be adaptive, trapezoid or compare");
}

int cli_main(int argc, char** argv) {
  CLI::App app{"density tracking by quadrature for N-dimensional SDEs"};
  app.require_subcommand(1);
  std::string config_path;
  int threads = 0;
  double buffer_arg = 0.0;
  double kappa_arg = 0.0;
  CLI::App* run_cmd = app.add_subcommand("run", "run per the config's mode");
  CLI::App* cmp_cmd = app.add_subcommand("compare", "adaptive run checked against a tensor grid");
  CLI::App* val_cmd = app.add_subcommand("validate", "check a config and exit");
  for (CLI::App* sub : {run_cmd, cmp_cmd, val_cmd})
    sub->add_option("--config", config_path, "JSON config file")->required();
  run_cmd->add_option("--threads", threads, "worker threads (DTQ_THREADS wins)");
  cmp_cmd->add_option("--threads", threads, "worker threads (DTQ_THREADS wins)");
  cmp_cmd->add_option("--buffer", buffer_arg, "grid padding fraction");
  cmp_cmd->add_option("--kappa", kappa_arg, "grid spacing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    AppConfig cfg = parse_config(config_path);
    if (val_cmd->parsed()) {
      std::cout << "ok: " << cfg.problem_name << " (dim " << cfg.solver.problem.dim << ", mode "
                << cfg.mode << ")\n";
      return 0;
    }
    if (cmp_cmd->parsed()) {
      cfg.mode = "compare";
      if (cmp_cmd->count("--buffer")) cfg.buffer = buffer_arg;
      if (cmp_cmd->count("--kappa")) cfg.kappa = kappa_arg;
    }
    if (threads > 0) cfg.solver.threads = threads;
    if (const char* env = std::getenv("DTQ_THREADS")) {
      char* end = nullptr;
      const long t = std::strtol(env, &end, 10);
      if (end != env && t >= 1) cfg.solver.threads = static_cast<int>(t);
    }
    return run_app(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ResourceLimitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const MeshCollapseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

} // namespace dtq
