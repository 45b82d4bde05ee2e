#include "dtq/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dtq/errors.hpp"
#include "dtq/triangulation.hpp"

namespace dtq {

namespace detail {

namespace {
constexpr int kLeafSize = 16;
}

struct KdNode {
  int axis = -1; // -1 marks a leaf
  double split = 0.0;
  int left = -1, right = -1;
  int begin = 0, end = 0;
};

struct KdTree {
  int dim = 0;
  std::vector<PointId> ids;
  std::vector<KdNode> nodes;
  int root = -1;

  int build(int begin, int end, const std::vector<Vector>& pts) {
    KdNode node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= kLeafSize) {
      nodes.push_back(node);
      return static_cast<int>(nodes.size()) - 1;
    }
    Vector lo = pts[static_cast<std::size_t>(ids[begin])];
    Vector hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      const Vector& p = pts[static_cast<std::size_t>(ids[i])];
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(ids.begin() + begin, ids.begin() + mid, ids.begin() + end,
                     [&](PointId a, PointId b) {
                       const double ca = pts[static_cast<std::size_t>(a)][axis];
                       const double cb = pts[static_cast<std::size_t>(b)][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    node.axis = axis;
    node.split = pts[static_cast<std::size_t>(ids[mid])][axis];
    const int self = static_cast<int>(nodes.size());
    nodes.push_back(node);
    const int left = build(begin, mid, pts);
    const int right = build(mid, end, pts);
    nodes[self].left = left;
    nodes[self].right = right;
    return self;
  }

  struct Entry {
    double d2;
    PointId id;
    bool operator<(const Entry& o) const { // heap "less": top is the worst
      return d2 < o.d2 || (d2 == o.d2 && id < o.id);
    }
  };

  void knn(int node_idx, const Vector& x, int k, const std::vector<Vector>& pts,
           std::vector<Entry>& heap) const {
    const KdNode& node = nodes[static_cast<std::size_t>(node_idx)];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const PointId id = ids[static_cast<std::size_t>(i)];
        const Entry e{(pts[static_cast<std::size_t>(id)] - x).squaredNorm(), id};
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back(e);
          std::push_heap(heap.begin(), heap.end());
        } else if (e < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = e;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = x[node.axis] - node.split;
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    knn(near, x, k, pts, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().d2)
      knn(far, x, k, pts, heap);
  }

  int count(int node_idx, const Vector& x, double r2,
            const std::vector<Vector>& pts) const {
    const KdNode& node = nodes[static_cast<std::size_t>(node_idx)];
    if (node.axis < 0) {
      int c = 0;
      for (int i = node.begin; i < node.end; ++i) {
        const PointId id = ids[static_cast<std::size_t>(i)];
        if ((pts[static_cast<std::size_t>(id)] - x).squaredNorm() <= r2) ++c;
      }
      return c;
    }
    const double diff = x[node.axis] - node.split;
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    int c = count(near, x, r2, pts);
    if (diff * diff <= r2) c += count(far, x, r2, pts);
    return c;
  }
};

} // namespace detail

Mesh::Mesh(int dim) : dim_(dim) {}

Mesh::Mesh(const Mesh& other)
    : dim_(other.dim_),
      alive_count_(other.alive_count_),
      generation_(other.generation_),
      points_(other.points_),
      density_(other.density_),
      alive_(other.alive_) {}

Mesh& Mesh::operator=(const Mesh& other) {
  if (this == &other) return *this;
  dim_ = other.dim_;
  alive_count_ = other.alive_count_;
  generation_ = other.generation_;
  points_ = other.points_;
  density_ = other.density_;
  alive_ = other.alive_;
  index_generation_.store(-1, std::memory_order_release);
  index_.reset();
  return *this;
}

Mesh::~Mesh() = default;

PointId Mesh::add_point(const Vector& x, double density) {
  const PointId id = end_id();
  points_.push_back(x);
  density_.push_back(density);
  alive_.push_back(1);
  ++alive_count_;
  ++generation_;
  return id;
}

void Mesh::remove_point(PointId id) {
  if (!alive(id)) return;
  alive_[static_cast<std::size_t>(id)] = 0;
  --alive_count_;
  ++generation_;
}

std::vector<PointId> Mesh::alive_ids() const {
  std::vector<PointId> ids;
  ids.reserve(static_cast<std::size_t>(alive_count_));
  for (PointId id = 0; id < end_id(); ++id)
    if (alive_[static_cast<std::size_t>(id)]) ids.push_back(id);
  return ids;
}

double Mesh::min_density() const {
  double lo = std::numeric_limits<double>::infinity();
  for (PointId id = 0; id < end_id(); ++id)
    if (alive_[static_cast<std::size_t>(id)])
      lo = std::min(lo, density_[static_cast<std::size_t>(id)]);
  return std::isfinite(lo) ? lo : 0.0;
}

void Mesh::ensure_index() const {
  if (index_generation_.load(std::memory_order_acquire) == generation_) return;
  std::lock_guard<std::mutex> lock(index_mutex_);
  if (index_generation_.load(std::memory_order_relaxed) == generation_) return;
  auto tree = std::make_unique<detail::KdTree>();
  tree->dim = dim_;
  tree->ids = alive_ids();
  if (!tree->ids.empty()) tree->root = tree->build(0, static_cast<int>(tree->ids.size()), points_);
  index_ = std::move(tree);
  index_generation_.store(generation_, std::memory_order_release);
}

std::vector<PointId> Mesh::nearest_neighbors(const Vector& x, int k) const {
  ensure_index();
  k = std::min(k, alive_count_);
  if (k <= 0 || index_->root < 0) return {};
  std::vector<detail::KdTree::Entry> heap;
  heap.reserve(static_cast<std::size_t>(k));
  index_->knn(index_->root, x, k, points_, heap);
  std::sort(heap.begin(), heap.end());
  std::vector<PointId> out;
  out.reserve(heap.size());
  for (const auto& e : heap) out.push_back(e.id);
  return out;
}

int Mesh::count_within(const Vector& x, double radius) const {
  ensure_index();
  if (index_->root < 0) return 0;
  return index_->count(index_->root, x, radius * radius, points_);
}

Mesh initial_mesh(int dim, double delta_min, double radius) {
  Mesh mesh(dim);
  const double ratio = radius / delta_min;
  // Integer shell nearest to the requested radius; keeps lattice counts
  // stable when (R/d)^2 lands within roundoff of an attainable |k|^2.
  const long long q = std::llround(ratio * ratio);
  long long kmax = static_cast<long long>(std::sqrt(static_cast<double>(q)));
  while ((kmax + 1) * (kmax + 1) <= q) ++kmax;
  while (kmax > 0 && kmax * kmax > q) --kmax;

  std::vector<long long> k(static_cast<std::size_t>(dim), -kmax);
  Vector x(dim);
  while (true) {
    long long s = 0;
    for (int i = 0; i < dim; ++i) s += k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(i)];
    if (s <= q) {
      for (int i = 0; i < dim; ++i) x[i] = delta_min * static_cast<double>(k[static_cast<std::size_t>(i)]);
      mesh.add_point(x, 0.0);
    }
    int pos = dim - 1;
    while (pos >= 0 && k[static_cast<std::size_t>(pos)] == kmax) {
      k[static_cast<std::size_t>(pos)] = -kmax;
      --pos;
    }
    if (pos < 0) break;
    ++k[static_cast<std::size_t>(pos)];
  }
  return mesh;
}

std::vector<PointId> mesh_boundary(const Mesh& mesh, double alpha_hat) {
  const std::vector<PointId> ids = mesh.alive_ids();
  const int n = static_cast<int>(ids.size());
  if (n == 0) return {};

  if (mesh.dim() == 1) {
    PointId lo = ids[0], hi = ids[0];
    for (PointId id : ids) {
      if (mesh.point(id)[0] < mesh.point(lo)[0]) lo = id;
      if (mesh.point(id)[0] > mesh.point(hi)[0]) hi = id;
    }
    if (lo == hi) return {lo};
    return lo < hi ? std::vector<PointId>{lo, hi} : std::vector<PointId>{hi, lo};
  }

  if (mesh.dim() >= 4) {
    mesh.ensure_index();
    std::vector<int> counts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      counts[static_cast<std::size_t>(i)] =
          mesh.count_within(mesh.point(ids[static_cast<std::size_t>(i)]), alpha_hat) - 1;
    std::vector<int> sorted = counts;
    std::nth_element(sorted.begin(), sorted.begin() + (n - 1) / 2, sorted.end());
    const double cutoff = 0.75 * static_cast<double>(sorted[static_cast<std::size_t>((n - 1) / 2)]);
    std::vector<PointId> boundary;
    for (int i = 0; i < n; ++i)
      if (static_cast<double>(counts[static_cast<std::size_t>(i)]) < cutoff)
        boundary.push_back(ids[static_cast<std::size_t>(i)]);
    return boundary;
  }

  Matrix pts(n, mesh.dim());
  for (int i = 0; i < n; ++i)
    pts.row(i) = mesh.point(ids[static_cast<std::size_t>(i)]).transpose();
  const Triangulation tri = delaunay(pts);
  try {
    std::vector<PointId> boundary;
    for (int idx : alpha_shape_boundary(tri, alpha_hat))
      boundary.push_back(ids[static_cast<std::size_t>(idx)]);
    return boundary;
  } catch (const EmptyShapeError&) {
    return ids; // nothing kept: treat the whole cloud as boundary
  }
}

int add_boundary_points(Mesh& mesh, const std::vector<PointId>& boundary,
                        double beta, double delta_min, double delta_max) {
  const double threshold = std::pow(10.0, -beta);
  std::vector<PointId> flagged;
  for (PointId id : boundary)
    if (mesh.alive(id) && mesh.density(id) > threshold) flagged.push_back(id);
  std::sort(flagged.begin(), flagged.end());
  if (flagged.empty()) return 0;

  const double fill_density = mesh.min_density();
  const double lo = delta_min * (1.0 - 1e-9);
  const double hi = delta_max * (1.0 + 1e-9);
  const int dim = mesh.dim();
  mesh.ensure_index();

  std::vector<Vector> accepted;
  std::vector<int> digit(static_cast<std::size_t>(dim), 0);
  Vector cand(dim);
  for (PointId id : flagged) {
    const Vector& base = mesh.point(id);
    std::fill(digit.begin(), digit.end(), 0); // digits 0,1,2 -> offsets -1,0,+1
    while (true) {
      bool all_center = true;
      for (int i = 0; i < dim; ++i)
        if (digit[static_cast<std::size_t>(i)] != 1) all_center = false;
      if (!all_center) {
        for (int i = 0; i < dim; ++i)
          cand[i] = base[i] + delta_max * static_cast<double>(digit[static_cast<std::size_t>(i)] - 1);
        double nearest = std::numeric_limits<double>::infinity();
        const auto nn = mesh.nearest_neighbors(cand, 1);
        if (!nn.empty()) nearest = (mesh.point(nn[0]) - cand).norm();
        for (const Vector& a : accepted)
          nearest = std::min(nearest, (a - cand).norm());
        if (nearest > lo && nearest <= hi) accepted.push_back(cand);
      }
      int pos = dim - 1;
      while (pos >= 0 && digit[static_cast<std::size_t>(pos)] == 2) {
        digit[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
      ++digit[static_cast<std::size_t>(pos)];
    }
  }
  for (const Vector& a : accepted) mesh.add_point(a, fill_density);
  return static_cast<int>(accepted.size());
}

int remove_low_density_points(Mesh& mesh, double beta) {
  const double threshold = std::pow(10.0, -beta - 0.5);
  std::vector<PointId> doomed;
  for (PointId id : mesh.alive_ids())
    if (mesh.density(id) < threshold) doomed.push_back(id);
  if (static_cast<int>(doomed.size()) == mesh.size())
    throw MeshCollapseError("density removal would empty the mesh");
  for (PointId id : doomed) mesh.remove_point(id);
  return static_cast<int>(doomed.size());
}

} // namespace dtq
