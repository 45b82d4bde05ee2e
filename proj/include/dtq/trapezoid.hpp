#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dtq/diagnostics.hpp"
#include "dtq/sde_model.hpp"
#include "dtq/types.hpp"

namespace dtq {

/// Equispaced tensor-product grid. Points are enumerated row-major with the
/// last axis fastest; nothing is materialized, coordinates are computed from
/// the flat index.
struct TensorGrid {
  int dim = 0;
  Vector lo;               // first grid point per axis
  std::vector<int> counts; // points per axis, each >= 1
  double kappa = 0.0;      // spacing, shared by all axes

  std::int64_t size() const;
  Vector point(std::int64_t flat) const;
  Vector hi() const; // last grid point per axis

  /// Multilinear interpolation of per-point values; coordinates outside the
  /// grid are clamped to the nearest cell.
  double interpolate(const std::vector<double>& values, const Vector& x) const;
};

/// Buffered bounding box of a point cloud: each axis of [min, max] is padded
/// by (buffer/2) * (max - min) on both sides, then discretized with spacing
/// kappa so the last point is the first one at or beyond the padded top.
TensorGrid tensor_mesh_from_adaptive(const Vector& adaptive_min, const Vector& adaptive_max,
                                     double buffer, double kappa);

/// One density-tracking step on the full grid:
///   new_j = kappa^N * sum_i G(y_j | source y_i) * density_i.
std::vector<double> trapezoid_step(const TensorGrid& grid, const std::vector<double>& densities,
                                   const SdeProblem& problem, double h);

struct TrapezoidRun {
  std::vector<std::pair<double, std::vector<double>>> snapshots; // (requested time, values)
  std::vector<double> final_density;
  int steps = 0;
  double final_time = 0.0;
  double wall_seconds = 0.0;
  std::optional<ErrorReport> errors_final; // present when the problem has an exact solution
};

/// Runs from the point-mass start (first step evaluates the origin kernel at
/// every grid point) to end_time in steps of h. The kernel matrix is built
/// once and kept dense when it fits dense_budget_bytes, otherwise entries are
/// recomputed row-blockwise every step. Grid sizes whose dense matrix would
/// exceed hard_limit_bytes raise ResourceLimitError up front.
TrapezoidRun run_trapezoid(const TensorGrid& grid, const SdeProblem& problem, double h,
                           double end_time, const std::vector<double>& snapshot_times = {},
                           int threads = 1,
                           std::int64_t dense_budget_bytes = std::int64_t{512} << 20,
                           std::int64_t hard_limit_bytes = std::int64_t{8} << 30);

} // namespace dtq
