#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dtq/dtq_engine.hpp"
#include "dtq/types.hpp"

namespace dtq {

/// A full run description: solver parameters plus orchestration choices.
/// solver.problem is materialized from problem_name at parse time.
struct AppConfig {
  std::string problem_name;
  SolverConfig solver;
  std::string mode = "adaptive"; // adaptive | trapezoid | compare
  std::string output_dir = ".";
  std::optional<double> kappa;  // tensor grid spacing (trapezoid/compare only)
  std::optional<double> buffer; // tensor grid padding fraction (dito)
};

/// Parses a JSON config. Required keys: problem, h, end_time, beta,
/// delta_min, delta_max, radius. Every other solver key falls back to the
/// per-dimension default table (dimensions 1..5; higher dimensions must spell
/// all of lp_q, laplace_nn, candidate_size out). Unknown keys are hard
/// errors, as are kappa/buffer outside trapezoid or compare mode. The result
/// is validated before it is returned.
AppConfig parse_config_text(const std::string& text);
AppConfig parse_config(const std::string& path); // same, reading a file

/// Config echo with all defaults materialized; parsing it again reproduces
/// the AppConfig exactly.
std::string write_config(const AppConfig& config);

/// "snapshot_%.6f.csv"
std::string snapshot_filename(double t);

/// CSV "t,x1,...,xN,p" with one row per point in the given order and every
/// value printed with 17 significant digits.
void write_snapshot(const std::string& dir, double t, const Matrix& points,
                    const std::vector<double>& densities);

/// Executes the configured flow (run or compare layouts, snapshot files,
/// manifest.json) and returns the process exit code: 0 success,
/// 3 mesh-collapse or resource-limit abort (manifest still written).
int run_app(const AppConfig& config);

/// Full command line: dtq <run|compare|validate> --config <file> [--threads]
/// plus --buffer/--kappa overrides for compare. DTQ_THREADS wins over
/// --threads. Exit codes: 0 ok, 2 validation, 3 resource/collapse, 1 other.
int cli_main(int argc, char** argv);

} // namespace dtq
