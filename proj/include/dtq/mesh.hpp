#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "dtq/types.hpp"

namespace dtq {

namespace detail {
struct KdTree;
}

/// Unstructured point cloud with per-point densities. PointIds are issued
/// sequentially and never reused; removed slots stay dead. The kNN index is
/// rebuilt lazily whenever the generation counter has moved.
class Mesh {
public:
  explicit Mesh(int dim);
  Mesh(const Mesh& other);
  Mesh& operator=(const Mesh& other);
  ~Mesh();

  int dim() const { return dim_; }
  int size() const { return alive_count_; }
  std::int64_t generation() const { return generation_; }
  PointId end_id() const { return static_cast<PointId>(points_.size()); }

  PointId add_point(const Vector& x, double density = 0.0);
  void remove_point(PointId id);

  bool alive(PointId id) const {
    return id >= 0 && id < end_id() && alive_[static_cast<std::size_t>(id)];
  }
  const Vector& point(PointId id) const { return points_[static_cast<std::size_t>(id)]; }
  double density(PointId id) const { return density_[static_cast<std::size_t>(id)]; }
  void set_density(PointId id, double value) { density_[static_cast<std::size_t>(id)] = value; }

  std::vector<PointId> alive_ids() const; // ascending
  double min_density() const;             // over alive points

  /// k closest alive points by Euclidean distance, ascending; exact ties
  /// broken by smaller id. k is clamped to the mesh size. A query at a mesh
  /// point returns that point first.
  std::vector<PointId> nearest_neighbors(const Vector& x, int k) const;

  /// Number of alive points in the closed ball of the given radius.
  int count_within(const Vector& x, double radius) const;

  /// Builds the spatial index if stale. Call before concurrent queries;
  /// queries themselves are then const and thread-safe.
  void ensure_index() const;

private:
  int dim_;
  int alive_count_ = 0;
  std::int64_t generation_ = 0;
  std::vector<Vector> points_;
  std::vector<double> density_;
  std::vector<char> alive_;

  mutable std::mutex index_mutex_;
  mutable std::atomic<std::int64_t> index_generation_{-1};
  mutable std::unique_ptr<detail::KdTree> index_;
};

/// Origin-centered lattice with spacing delta_min, clipped to the ball of
/// the given radius: a lattice vector k is kept iff |k|^2 <= round((R/d)^2),
/// the nearest integer shell to the requested radius. Densities start at 0.
Mesh initial_mesh(int dim, double delta_min, double radius);

/// Boundary point set. N=1: the min and max coordinate points. N=2,3:
/// Delaunay plus alpha shape with the given radius cutoff; an empty shape
/// marks every point as boundary. N>=4: points whose neighbor count within
/// alpha_hat falls below 0.75x the mesh median.
std::vector<PointId> mesh_boundary(const Mesh& mesh, double alpha_hat);

/// For each boundary point with density > 10^-beta, proposes the grid layer
/// {-dmax, 0, +dmax}^N around it (origin excluded) and accepts a candidate
/// iff its distance to the nearest existing-or-accepted point lies in
/// (dmin, dmax] (with a 1e-9 relative tie band on both ends). Accepted
/// points are bulk-inserted afterwards with the mesh-minimum density taken
/// at entry. Returns the number added.
int add_boundary_points(Mesh& mesh, const std::vector<PointId>& boundary,
                        double beta, double delta_min, double delta_max);

/// Removes every point with density < 10^(-beta-0.5). Throws MeshCollapseError
/// (before mutating) if that would empty the mesh. Returns the number removed.
int remove_low_density_points(Mesh& mesh, double beta);

} // namespace dtq
