#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dtq/mesh.hpp"

namespace dtq {

/// Discrete error norms of a computed density against a reference sampled at
/// the same points. l2p weights squared errors by the reference mass so the
/// figure is comparable across meshes of different sizes.
struct ErrorReport {
  double l2p = 0.0;
  double l2 = 0.0;
  double l1 = 0.0;
  double linf = 0.0;
};

/// Throws DegenerateReferenceError when the reference sums to zero (the
/// weighted norm is undefined) and std::invalid_argument on length mismatch.
ErrorReport error_norms(const std::vector<double>& exact,
                        const std::vector<double>& computed);

/// Per-step bookkeeping for one solver sweep. reuse + alt + fresh equals the
/// number of points updated that step.
struct StepStats {
  int step = 0;      // 1-based time step index
  int mesh_size = 0; // alive points after the step
  int reuse = 0;
  int alt = 0;
  int fresh = 0;
  int added = 0;
  int removed = 0;
  double seconds = 0.0;
};

/// Mean per-step percentages over a contiguous stepped phase (steps 2..N).
/// Reuse is averaged from step 3 on (step 2 has no cache to reuse) and alt
/// from step 2 on; each is absent when no step qualifies.
std::pair<std::optional<double>, std::optional<double>>
reuse_and_alt_averages(const std::vector<StepStats>& stats);

/// Total probability mass carried by the mesh: trapezoid rule in 1D,
/// simplex-averaged densities over the Delaunay cover in 2D and 3D, and the
/// lattice-cell sum density * delta_min^N above that.
double mass_estimate(const Mesh& mesh, double delta_min);

} // namespace dtq
