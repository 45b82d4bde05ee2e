#pragma once

#include <vector>

#include "dtq/types.hpp"

namespace dtq {

/// Simplicial complex over rows of the point matrix handed to delaunay().
/// Each simplex holds N+1 row indices sorted ascending; the simplex list is
/// lexicographically sorted, so equal point sets give equal structures.
struct Triangulation {
  int dim = 0;
  std::vector<std::vector<int>> simplices;
  std::vector<double> circumradii;
};

/// Incremental Bowyer-Watson Delaunay triangulation for N = 2 or 3.
/// Points are inserted in lexicographic coordinate order, so the output is
/// independent of input row order; cospherical ties resolve deterministically
/// (a point exactly on a circumsphere counts as outside). Throws
/// DegenerateGeometryError if the cloud is affinely dependent.
Triangulation delaunay(const Matrix& points);

/// Radius of the unique sphere through the N+1 rows. Throws
/// DegenerateGeometryError for flat simplices.
double circumsphere_radius(const Matrix& simplex_points);

/// Keeps simplices with circumradius < alpha_hat, then returns the sorted
/// vertices of (N-1)-faces occurring exactly once among the kept set.
/// Throws EmptyShapeError when nothing passes the cutoff.
std::vector<int> alpha_shape_boundary(const Triangulation& tri, double alpha_hat);

} // namespace dtq
