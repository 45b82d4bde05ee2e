#include "dtq/polynomial_basis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace dtq {

namespace {

void enumerate_degree(int dim, int degree, std::vector<int>& prefix,
                      std::vector<std::vector<int>>& out) {
  if (static_cast<int>(prefix.size()) == dim - 1) {
    prefix.push_back(degree);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  // Descending first component gives lexicographically descending order.
  for (int a = degree; a >= 0; --a) {
    prefix.push_back(a);
    enumerate_degree(dim, degree - a, prefix, out);
    prefix.pop_back();
  }
}

} // namespace

MultiIndexSet::MultiIndexSet(int dim, std::vector<std::vector<int>> indices)
    : dim_(dim), indices_(std::move(indices)) {
  for (const auto& alpha : indices_)
    for (int a : alpha) max_component_ = std::max(max_component_, a);
}

MultiIndexSet MultiIndexSet::graded(int dim, int count) {
  if (dim < 1) throw std::invalid_argument("MultiIndexSet: dim must be >= 1");
  if (count < 1) throw std::invalid_argument("MultiIndexSet: count must be >= 1");
  std::vector<std::vector<int>> indices;
  indices.reserve(count);
  std::vector<int> prefix;
  for (int degree = 0; static_cast<int>(indices.size()) < count; ++degree) {
    std::vector<std::vector<int>> level;
    enumerate_degree(dim, degree, prefix, level);
    for (auto& alpha : level) {
      indices.push_back(std::move(alpha));
      if (static_cast<int>(indices.size()) == count) break;
    }
  }
  return MultiIndexSet(dim, std::move(indices));
}

MultiIndexSet MultiIndexSet::full_degree(int dim, int degree) {
  return graded(dim, count_up_to_degree(dim, degree));
}

int MultiIndexSet::count_up_to_degree(int dim, int degree) {
  // C(dim + degree, dim)
  long long c = 1;
  for (int i = 1; i <= dim; ++i) c = c * (degree + i) / i;
  return static_cast<int>(c);
}

int MultiIndexSet::find(const std::vector<int>& alpha) const {
  for (int i = 0; i < size(); ++i)
    if (indices_[i] == alpha) return i;
  return -1;
}

double hermite_eval(int degree, double zeta) {
  double prev = 0.0, cur = 1.0;
  for (int d = 0; d < degree; ++d) {
    double next = zeta * std::sqrt(2.0 / (d + 1)) * cur -
                  std::sqrt(static_cast<double>(d) / (d + 1)) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

void hermite_eval_upto(int degree, double zeta, double* out) {
  out[0] = 1.0;
  if (degree == 0) return;
  out[1] = std::numbers::sqrt2 * zeta;
  for (int d = 1; d < degree; ++d)
    out[d + 1] = zeta * std::sqrt(2.0 / (d + 1)) * out[d] -
                 std::sqrt(static_cast<double>(d) / (d + 1)) * out[d - 1];
}

Vector basis_eval(const MultiIndexSet& set, const Vector& zeta) {
  if (zeta.size() != set.dim())
    throw std::invalid_argument("basis_eval: dimension mismatch");
  const int dim = set.dim();
  const int maxd = set.max_component();
  // Univariate table: table[l * (maxd+1) + d] = h_d(zeta_l)
  std::vector<double> table(static_cast<std::size_t>(dim) * (maxd + 1));
  for (int l = 0; l < dim; ++l)
    hermite_eval_upto(maxd, zeta[l], table.data() + static_cast<std::size_t>(l) * (maxd + 1));
  Vector phi(set.size());
  for (int i = 0; i < set.size(); ++i) {
    double v = 1.0;
    const auto& alpha = set[i];
    for (int l = 0; l < dim; ++l)
      v *= table[static_cast<std::size_t>(l) * (maxd + 1) + alpha[l]];
    phi[i] = v;
  }
  return phi;
}

Matrix basis_vandermonde(const MultiIndexSet& set, const Matrix& points) {
  if (points.cols() != set.dim())
    throw std::invalid_argument("basis_vandermonde: dimension mismatch");
  Matrix v(points.rows(), set.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    v.row(i) = basis_eval(set, points.row(i).transpose()).transpose();
  return v;
}

std::optional<InterpolatoryRule> interpolatory_weights(const Matrix& nodes,
                                                       const MultiIndexSet& set) {
  if (nodes.rows() != set.size())
    throw std::invalid_argument("interpolatory_weights: need exactly one node per index");
  const Matrix v = basis_vandermonde(set, nodes);
  Eigen::FullPivLU<Matrix> lu(v.transpose());
  if (!lu.isInvertible()) return std::nullopt;
  Vector e1 = Vector::Zero(set.size());
  e1[0] = 1.0;
  Vector w = lu.solve(e1);
  if (!w.allFinite()) return std::nullopt;
  const double condition = w.lpNorm<1>();
  return InterpolatoryRule{std::move(w), condition};
}

std::optional<std::vector<int>> leja_select(const Matrix& candidates,
                                            const MultiIndexSet& set, int m) {
  const Eigen::Index n = candidates.rows();
  if (m < 1 || m > set.size())
    throw std::invalid_argument("leja_select: m must be in [1, |set|]");
  if (n < m)
    throw std::invalid_argument("leja_select: fewer candidates than requested nodes");

  // Weighted Vandermonde, restricted to the first m basis functions.
  Matrix v(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector phi = basis_eval(set, candidates.row(i).transpose());
    const double w = std::exp(-0.5 * candidates.row(i).squaredNorm()); // sqrt of exp(-|z|^2)
    v.row(i) = w * phi.head(m).transpose();
  }
  // Row scale before elimination; degeneracy is judged relative to it.
  Vector row_scale(n);
  for (Eigen::Index i = 0; i < n; ++i)
    row_scale[i] = v.row(i).cwiseAbs().maxCoeff();

  std::vector<int> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  for (int k = 0; k < m; ++k) {
    // Partial pivot: largest |v(i,k)| among remaining rows, first index on ties.
    Eigen::Index best = k;
    double best_abs = std::abs(v(k, k));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double a = std::abs(v(i, k));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    const double scale = std::max(row_scale[order[best]], 1e-300);
    if (!(best_abs > 1e-13 * scale)) return std::nullopt; // rank collapse
    if (best != k) {
      v.row(k).swap(v.row(best));
      std::swap(order[k], order[best]);
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double factor = v(i, k) / v(k, k);
      if (factor != 0.0) v.row(i).tail(m - k) -= factor * v.row(k).tail(m - k);
    }
  }
  return std::vector<int>(order.begin(), order.begin() + m);
}

namespace {

Matrix standard_candidates(int dim, int m) {
  const double half = 3.5;
  if (dim == 1) {
    const int n = 701;
    Matrix c(n, 1);
    for (int i = 0; i < n; ++i) c(i, 0) = -half + 2 * half * i / (n - 1);
    return c;
  }
  if (dim == 2) {
    const int per = 71;
    Matrix c(per * per, 2);
    int r = 0;
    for (int i = 0; i < per; ++i)
      for (int j = 0; j < per; ++j) {
        c(r, 0) = -half + 2 * half * i / (per - 1);
        c(r, 1) = -half + 2 * half * j / (per - 1);
        ++r;
      }
    return c;
  }
  // Low-discrepancy Halton cloud (deterministic; no seed needed).
  static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  if (dim > 10)
    throw std::invalid_argument("standard_leja_nodes: dimension > 10 unsupported");
  const int n = std::max(20 * m, 4096);
  Matrix c(n, dim);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < dim; ++l) {
      const int base = primes[l];
      double f = 1.0, x = 0.0;
      for (int idx = i + 1; idx > 0; idx /= base) {
        f /= base;
        x += f * (idx % base);
      }
      c(i, l) = -half + 2 * half * x;
    }
  return c;
}

} // namespace

const StandardRule& standard_leja_nodes(int dim, int m) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<StandardRule>> memo;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = memo[{dim, m}];
  if (!slot) {
    const Matrix cands = standard_candidates(dim, m);
    const MultiIndexSet set = MultiIndexSet::graded(dim, m);
    const auto sel = leja_select(cands, set, m);
    if (!sel)
      throw std::runtime_error("standard_leja_nodes: candidate cloud degenerate");
    auto rule = std::make_unique<StandardRule>();
    rule->nodes.resize(m, dim);
    for (int i = 0; i < m; ++i) rule->nodes.row(i) = cands.row((*sel)[i]);
    const auto iw = interpolatory_weights(rule->nodes, set);
    if (!iw)
      throw std::runtime_error("standard_leja_nodes: weight solve failed");
    rule->weights = iw->weights;
    rule->condition = iw->condition;
    slot = std::move(rule);
  }
  return *slot;
}

} // namespace dtq
