#include "dtq/triangulation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "dtq/errors.hpp"

namespace dtq {

namespace {

// Determinant signs carry a degeneracy band scaled by the Hadamard bound of
// the row norms: anything inside the band is a tie and ties count as
// outside/degenerate, which is what makes cospherical lattice input
// deterministic.
constexpr double kPredTol = 1e-11;

int banded_sign(double det, double scale) {
  if (!(std::abs(det) > kPredTol * scale)) return 0;
  return det > 0.0 ? 1 : -1;
}

struct Cell {
  std::array<int, 4> v{{-1, -1, -1, -1}};
  std::array<int, 4> nbr{{-1, -1, -1, -1}};
  bool alive = true;
};

class BowyerWatson {
public:
  BowyerWatson(const Matrix& points, int nd) : nd_(nd), nv_(nd + 1) {
    const int n = static_cast<int>(points.rows());
    n_real_ = n;
    // Lexicographic insertion order; output becomes input-order independent.
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](int a, int b) {
      for (int d = 0; d < nd_; ++d) {
        if (points(a, d) < points(b, d)) return true;
        if (points(a, d) > points(b, d)) return false;
      }
      return a < b;
    });
    pts_.reserve(static_cast<std::size_t>(n + nv_));
    orig_ = perm;
    for (int k = 0; k < n; ++k) pts_.push_back(points.row(perm[static_cast<std::size_t>(k)]).transpose());

    make_super_simplex(points);
    for (int k = 0; k < n; ++k) insert(k);
  }

  Triangulation result(const Matrix& points) const {
    Triangulation out;
    out.dim = nd_;
    std::vector<std::pair<std::vector<int>, double>> rows;
    Matrix sp(nv_, nd_);
    for (const Cell& c : cells_) {
      if (!c.alive) continue;
      bool real = true;
      for (int i = 0; i < nv_; ++i)
        if (c.v[static_cast<std::size_t>(i)] >= n_real_) real = false;
      if (!real) continue;
      std::vector<int> tuple(static_cast<std::size_t>(nv_));
      for (int i = 0; i < nv_; ++i)
        tuple[static_cast<std::size_t>(i)] = orig_[static_cast<std::size_t>(c.v[static_cast<std::size_t>(i)])];
      std::sort(tuple.begin(), tuple.end());
      for (int i = 0; i < nv_; ++i) sp.row(i) = points.row(tuple[static_cast<std::size_t>(i)]);
      double radius;
      try {
        radius = circumsphere_radius(sp);
      } catch (const DegenerateGeometryError&) {
        radius = std::numeric_limits<double>::infinity();
      }
      rows.emplace_back(std::move(tuple), radius);
    }
    if (rows.empty())
      throw DegenerateGeometryError("point cloud is affinely dependent");
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& r : rows) {
      out.simplices.push_back(std::move(r.first));
      out.circumradii.push_back(r.second);
    }
    return out;
  }

private:
  int nd_, nv_, n_real_ = 0;
  std::vector<Vector> pts_;
  std::vector<int> orig_;
  std::vector<Cell> cells_;
  int last_cell_ = 0;

  void make_super_simplex(const Matrix& points) {
    Vector lo = points.colwise().minCoeff().transpose();
    Vector hi = points.colwise().maxCoeff().transpose();
    const Vector center = 0.5 * (lo + hi);
    const double w = std::max(1.0, 0.5 * (hi - lo).maxCoeff());
    const double s = 40.0 * w;
    if (nd_ == 2) {
      const double r3 = std::sqrt(3.0);
      Vector a(2), b(2), c(2);
      a << 0.0, 2.0;
      b << -r3, -1.0;
      c << r3, -1.0;
      pts_.push_back(center + s * a);
      pts_.push_back(center + s * b);
      pts_.push_back(center + s * c);
    } else {
      Vector a(3), b(3), c(3), d(3);
      a << 1, 1, 1;
      b << 1, -1, -1;
      c << -1, 1, -1;
      d << -1, -1, 1;
      pts_.push_back(center + s * a);
      pts_.push_back(center + s * b);
      pts_.push_back(center + s * c);
      pts_.push_back(center + s * d);
    }
    Cell super;
    for (int i = 0; i < nv_; ++i) super.v[static_cast<std::size_t>(i)] = n_real_ + i;
    cells_.push_back(super);
    double scale = 0.0;
    if (orient_det(cells_[0].v, &scale) < 0.0) {
      std::swap(cells_[0].v[0], cells_[0].v[1]);
      std::swap(cells_[0].nbr[0], cells_[0].nbr[1]);
    }
    last_cell_ = 0;
  }

  double orient_det(const std::array<int, 4>& v, double* scale) const {
    const Vector& base = pts_[static_cast<std::size_t>(v[0])];
    if (nd_ == 2) {
      Eigen::Matrix2d m;
      m.row(0) = (pts_[static_cast<std::size_t>(v[1])] - base).transpose();
      m.row(1) = (pts_[static_cast<std::size_t>(v[2])] - base).transpose();
      *scale = m.row(0).norm() * m.row(1).norm();
      return m.determinant();
    }
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
      m.row(i) = (pts_[static_cast<std::size_t>(v[i + 1])] - base).transpose();
    *scale = m.row(0).norm() * m.row(1).norm() * m.row(2).norm();
    return m.determinant();
  }

  int orient_sign_replaced(const Cell& c, int slot, int p) const {
    std::array<int, 4> v = c.v;
    v[static_cast<std::size_t>(slot)] = p;
    double scale = 0.0;
    const double det = orient_det(v, &scale);
    return banded_sign(det, scale);
  }

  // Strictly-inside-circumsphere test for a positively oriented cell; ties
  // (point on the sphere within the band) report outside.
  bool in_sphere(const Cell& c, int p) const {
    const Vector& q = pts_[static_cast<std::size_t>(p)];
    double det, scale = 1.0;
    if (nd_ == 2) {
      Eigen::Matrix3d m;
      for (int i = 0; i < 3; ++i) {
        const Vector r = pts_[static_cast<std::size_t>(c.v[static_cast<std::size_t>(i)])] - q;
        m(i, 0) = r[0];
        m(i, 1) = r[1];
        m(i, 2) = r.squaredNorm();
        scale *= m.row(i).norm();
      }
      det = m.determinant();
      return banded_sign(det, scale) == 1;
    }
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i) {
      const Vector r = pts_[static_cast<std::size_t>(c.v[static_cast<std::size_t>(i)])] - q;
      m(i, 0) = r[0];
      m(i, 1) = r[1];
      m(i, 2) = r[2];
      m(i, 3) = r.squaredNorm();
      scale *= m.row(i).norm();
    }
    det = m.determinant();
    return banded_sign(det, scale) == -1;
  }

  int locate(int p) const {
    int cur = last_cell_;
    if (cur < 0 || cur >= static_cast<int>(cells_.size()) || !cells_[static_cast<std::size_t>(cur)].alive) {
      cur = -1;
      for (int i = static_cast<int>(cells_.size()) - 1; i >= 0; --i)
        if (cells_[static_cast<std::size_t>(i)].alive) {
          cur = i;
          break;
        }
    }
    const long cap = 4 * static_cast<long>(cells_.size()) + 64;
    for (long it = 0; it < cap; ++it) {
      const Cell& c = cells_[static_cast<std::size_t>(cur)];
      int exit_slot = -1;
      double worst = 0.0;
      for (int i = 0; i < nv_; ++i) {
        std::array<int, 4> v = c.v;
        v[static_cast<std::size_t>(i)] = p;
        double scale = 0.0;
        const double det = orient_det(v, &scale);
        if (banded_sign(det, scale) < 0) {
          const double depth = scale > 0.0 ? det / scale : det;
          if (exit_slot < 0 || depth < worst) {
            exit_slot = i;
            worst = depth;
          }
        }
      }
      if (exit_slot < 0) return cur;
      const int next = c.nbr[static_cast<std::size_t>(exit_slot)];
      if (next < 0) return cur;
      cur = next;
    }
    // Walk cycled inside the tolerance band: scan for a containing cell.
    int best = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int ci = 0; ci < static_cast<int>(cells_.size()); ++ci) {
      const Cell& c = cells_[static_cast<std::size_t>(ci)];
      if (!c.alive) continue;
      double cell_min = std::numeric_limits<double>::infinity();
      bool contained = true;
      for (int i = 0; i < nv_; ++i) {
        std::array<int, 4> v = c.v;
        v[static_cast<std::size_t>(i)] = p;
        double scale = 0.0;
        const double det = orient_det(v, &scale);
        if (banded_sign(det, scale) < 0) contained = false;
        cell_min = std::min(cell_min, scale > 0.0 ? det / scale : det);
      }
      if (contained) return ci;
      if (cell_min > best_min) {
        best_min = cell_min;
        best = ci;
      }
    }
    return best;
  }

  void insert(int p) {
    const int start = locate(p);
    const Cell& sc = cells_[static_cast<std::size_t>(start)];
    for (int i = 0; i < nv_; ++i)
      if ((pts_[static_cast<std::size_t>(sc.v[static_cast<std::size_t>(i)])] - pts_[static_cast<std::size_t>(p)])
              .squaredNorm() == 0.0)
        return; // exact duplicate: skip

    std::vector<int> cavity{start};
    std::map<int, char> state; // 1 = in cavity, 2 = locked in cavity
    state[start] = 2;
    for (std::size_t head = 0; head < cavity.size(); ++head) {
      const Cell& c = cells_[static_cast<std::size_t>(cavity[head])];
      for (int i = 0; i < nv_; ++i) {
        const int nb = c.nbr[static_cast<std::size_t>(i)];
        if (nb < 0 || state.count(nb)) continue;
        if (in_sphere(cells_[static_cast<std::size_t>(nb)], p)) {
          state[nb] = 1;
          cavity.push_back(nb);
        }
      }
    }

    // Star-shapedness repair: every cavity-boundary facet must see p strictly
    // on its inner side; shrink the cavity (or grow it across a locked cell's
    // facet) until that holds.
    const int max_rounds = 64 + static_cast<int>(cells_.size());
    for (int round = 0; round < max_rounds; ++round) {
      bool changed = false;
      for (std::size_t ci = 0; ci < cavity.size() && !changed; ++ci) {
        const int cell_idx = cavity[ci];
        auto it = state.find(cell_idx);
        if (it == state.end() || it->second == 0) continue;
        const Cell& c = cells_[static_cast<std::size_t>(cell_idx)];
        for (int i = 0; i < nv_ && !changed; ++i) {
          const int nb = c.nbr[static_cast<std::size_t>(i)];
          const bool nb_in = nb >= 0 && state.count(nb) && state[nb] != 0;
          if (nb_in) continue;
          if (orient_sign_replaced(c, i, p) > 0) continue;
          if (it->second == 2) {
            if (nb >= 0) {
              state[nb] = 2;
              cavity.push_back(nb);
              changed = true;
            }
          } else {
            it->second = 0;
            changed = true;
          }
        }
      }
      if (changed) continue;
      // Drop cavity cells disconnected from the start cell.
      std::vector<int> component{start};
      std::set<int> seen{start};
      for (std::size_t head = 0; head < component.size(); ++head) {
        const Cell& c = cells_[static_cast<std::size_t>(component[head])];
        for (int i = 0; i < nv_; ++i) {
          const int nb = c.nbr[static_cast<std::size_t>(i)];
          if (nb < 0 || seen.count(nb)) continue;
          auto nb_it = state.find(nb);
          if (nb_it == state.end() || nb_it->second == 0) continue;
          seen.insert(nb);
          component.push_back(nb);
        }
      }
      bool pruned = false;
      for (auto& [idx, st] : state) {
        if (st != 0 && !seen.count(idx)) {
          st = 0;
          pruned = true;
        }
      }
      if (!pruned) break;
    }

    std::vector<int> final_cavity;
    for (const auto& [idx, st] : state)
      if (st != 0) final_cavity.push_back(idx);

    // Boundary facets become new cells with p in the dropped vertex slot.
    struct NewCell {
      std::array<int, 4> v;
      int outer;     // neighbor outside the cavity (or -1)
      int slot;      // slot holding p
      int from_cell; // cavity cell the facet belonged to
    };
    std::vector<NewCell> created;
    for (int idx : final_cavity) {
      const Cell& c = cells_[static_cast<std::size_t>(idx)];
      for (int i = 0; i < nv_; ++i) {
        const int nb = c.nbr[static_cast<std::size_t>(i)];
        const bool nb_in = nb >= 0 && state.count(nb) && state[nb] != 0;
        if (nb_in) continue;
        NewCell nc;
        nc.v = c.v;
        nc.v[static_cast<std::size_t>(i)] = p;
        nc.outer = nb;
        nc.slot = i;
        nc.from_cell = idx;
        created.push_back(nc);
      }
    }
    if (created.empty()) return; // pathological; keep the triangulation intact

    std::vector<int> new_idx(created.size());
    for (std::size_t k = 0; k < created.size(); ++k) {
      Cell cell;
      cell.v = created[k].v;
      cell.nbr.fill(-1);
      cell.nbr[static_cast<std::size_t>(created[k].slot)] = created[k].outer;
      new_idx[k] = static_cast<int>(cells_.size());
      cells_.push_back(cell);
    }
    for (int idx : final_cavity) cells_[static_cast<std::size_t>(idx)].alive = false;

    // Rewire outer neighbors (two cells share at most one facet, so the old
    // cavity-cell pointer identifies the slot), then stitch new cells to one
    // another via the (N-1)-subfacets they share around p.
    for (std::size_t k = 0; k < created.size(); ++k) {
      const int outer = created[k].outer;
      if (outer < 0) continue;
      Cell& oc = cells_[static_cast<std::size_t>(outer)];
      for (int j = 0; j < nv_; ++j)
        if (oc.nbr[static_cast<std::size_t>(j)] == created[k].from_cell)
          oc.nbr[static_cast<std::size_t>(j)] = new_idx[k];
    }
    std::map<std::array<int, 2>, std::pair<int, int>> open_subfacet;
    for (std::size_t k = 0; k < created.size(); ++k) {
      const NewCell& nc = created[k];
      for (int j = 0; j < nv_; ++j) {
        if (j == nc.slot) continue; // that facet faces the outer neighbor
        std::array<int, 2> key{{-1, -1}};
        int t = 0;
        for (int u = 0; u < nv_; ++u)
          if (u != j && u != nc.slot) key[static_cast<std::size_t>(t++)] = nc.v[static_cast<std::size_t>(u)];
        std::sort(key.begin(), key.begin() + t);
        auto it = open_subfacet.find(key);
        if (it == open_subfacet.end()) {
          open_subfacet[key] = {static_cast<int>(k), j};
        } else {
          const auto [ok, oj] = it->second;
          cells_[static_cast<std::size_t>(new_idx[k])].nbr[static_cast<std::size_t>(j)] = new_idx[static_cast<std::size_t>(ok)];
          cells_[static_cast<std::size_t>(new_idx[static_cast<std::size_t>(ok)])].nbr[static_cast<std::size_t>(oj)] = new_idx[k];
          open_subfacet.erase(it);
        }
      }
    }
    last_cell_ = new_idx.back();
  }
};

} // namespace

Triangulation delaunay(const Matrix& points) {
  const int nd = static_cast<int>(points.cols());
  if (nd < 2 || nd > 3)
    throw ValidationError("delaunay supports 2 or 3 dimensions");
  if (points.rows() < nd + 1)
    throw DegenerateGeometryError("need at least N+1 points to triangulate");
  BowyerWatson bw(points, nd);
  return bw.result(points);
}

double circumsphere_radius(const Matrix& simplex_points) {
  const int nd = static_cast<int>(simplex_points.cols());
  if (simplex_points.rows() != nd + 1)
    throw DegenerateGeometryError("simplex needs N+1 vertices");
  Matrix u(nd, nd);
  Vector rhs(nd);
  for (int i = 0; i < nd; ++i) {
    u.row(i) = simplex_points.row(i + 1) - simplex_points.row(0);
    rhs[i] = u.row(i).squaredNorm();
  }
  const Eigen::FullPivLU<Matrix> lu(2.0 * u);
  if (!lu.isInvertible())
    throw DegenerateGeometryError("degenerate simplex has no circumsphere");
  return lu.solve(rhs).norm();
}

std::vector<int> alpha_shape_boundary(const Triangulation& tri, double alpha_hat) {
  const int nv = tri.dim + 1;
  std::map<std::array<int, 3>, int> face_count;
  bool kept_any = false;
  for (std::size_t k = 0; k < tri.simplices.size(); ++k) {
    if (!(tri.circumradii[k] < alpha_hat)) continue;
    kept_any = true;
    const std::vector<int>& s = tri.simplices[k];
    for (int drop = 0; drop < nv; ++drop) {
      std::array<int, 3> face{{-1, -1, -1}};
      int t = 0;
      for (int j = 0; j < nv; ++j)
        if (j != drop) face[static_cast<std::size_t>(t++)] = s[static_cast<std::size_t>(j)];
      ++face_count[face];
    }
  }
  if (!kept_any) throw EmptyShapeError("alpha shape kept no simplices");
  std::set<int> verts;
  for (const auto& [face, count] : face_count)
    if (count == 1)
      for (int v : face)
        if (v >= 0) verts.insert(v);
  return std::vector<int>(verts.begin(), verts.end());
}

} // namespace dtq
