#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtq/diagnostics.hpp"
#include "dtq/mesh.hpp"
#include "dtq/polynomial_basis.hpp"
#include "dtq/sde_model.hpp"
#include "dtq/types.hpp"

namespace dtq {

/// Full parameter set of the adaptive solver. Field names track the config
/// file keys one-to-one.
struct SolverConfig {
  SdeProblem problem;
  double h = 0.0;
  double end_time = 0.0;
  double beta = 0.0;         // growth threshold 10^-beta, removal 10^(-beta-0.5)
  double delta_min = 0.0;    // initial lattice spacing, also the removal-safe spacing
  double delta_max = 0.0;    // candidate offset spacing for growth
  double radius = 0.0;       // initial mesh ball radius
  double epsilon = 0.0;      // reuse acceptance: Gamma < 1 + epsilon
  double cond_alt = 0.0;     // fresh-rule acceptance: Gamma <= cond_alt
  int lp_q = 0;              // quadrature node count m
  int laplace_nn = 0;        // fit neighborhood size when no nodes are cached
  int candidate_size = 0;    // Leja candidate pool size
  int step_ac = 1;           // first step eligible for growth
  int step_a = 1;            // growth period
  int step_rc = 10;          // first step eligible for removal
  int step_r = 10;           // removal period
  std::vector<double> snapshot_times;
  int threads = 1;
};

/// Throws ValidationError on nonpositive quantities, delta_max < delta_min,
/// lp_q below the quadratic-fit minimum C(N+2,2), or candidate_size < lp_q.
void validate(const SolverConfig& config);

/// Mesh state captured after a step: rows follow ascending PointId.
struct MeshSnapshot {
  double time = 0.0; // requested snapshot time
  int step = 0;      // step whose state was captured
  std::vector<PointId> ids;
  Matrix points;
  std::vector<double> densities;
};

struct RunResult {
  std::vector<MeshSnapshot> snapshots;
  std::vector<StepStats> stats; // steps 2..N; step 1 is the direct kernel start
  int steps = 0;
  double final_time = 0.0;
  int peak_mesh_size = 0;
  Vector extent_min, extent_max; // union of mesh extents over the whole run
  std::optional<ErrorReport> errors_final;
  std::optional<double> avg_reuse_pct, avg_alt_pct;
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<PointId> final_ids;
  Matrix final_points;
  std::vector<double> final_densities;
};

/// Adaptive density tracker. One instance owns the mesh, per-point quadrature
/// caches, and the per-step scratch (source kernels plus the scattered
/// interpolation structure for the alternative path).
///
/// run() drives everything. The step pieces are public so tests can exercise
/// one phase at a time: call first_step() once, then for each later step
/// either step(n) or prepare_step() followed by update_point()/apply.
class AdaptiveSolver {
public:
  explicit AdaptiveSolver(SolverConfig config); // validates, builds the initial mesh

  enum class Method { reuse, fresh, alt };
  struct Update {
    double value = 0.0;
    Method method = Method::fresh;
    std::vector<PointId> fresh_nodes; // quadrature nodes to cache (fresh only)
    bool reuse_flag = false;          // whether those nodes earned reuse
  };

  /// Sets every density to the origin transition kernel at t = h.
  void first_step();

  /// Freezes the current densities and source kernels for a Jacobi sweep.
  /// Must be called after any mesh or density mutation and before
  /// update_point / alternative_update.
  void prepare_step();

  /// Quadrature update of one point against the frozen state. Does not write
  /// the mesh; apply_update commits value and cache bookkeeping.
  Update update_point(PointId j) const;
  double alternative_update(PointId j) const;
  void apply_update(PointId j, const Update& update);

  /// Growth/removal phases plus the full sweep for step index n >= 2.
  /// Returns the stats entry it also records internally.
  StepStats step(int n);

  RunResult run();

  Mesh& mesh() { return mesh_; }
  const Mesh& mesh() const { return mesh_; }
  const SolverConfig& config() const { return config_; }

private:
  struct CacheEntry {
    std::vector<PointId> node_ids;
    bool reuse = false;
  };
  struct Frozen; // per-step immutable view: densities, kernels, interpolation

  struct FitOutcome;
  std::optional<FitOutcome> laplace_fit_at(PointId j) const;
  double interpolate_density(const Vector& x) const;
  void ensure_interpolation() const;
  void purge_caches();

  SolverConfig config_;
  Mesh mesh_;
  MultiIndexSet quad_set_; // first lp_q graded multi-indices
  std::unordered_map<PointId, CacheEntry> cache_;
  std::vector<StepStats> stats_;
  std::shared_ptr<Frozen> frozen_;
  mutable std::mutex interp_mutex_;
};

} // namespace dtq
