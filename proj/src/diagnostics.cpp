#include "dtq/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtq/errors.hpp"
#include "dtq/triangulation.hpp"

namespace dtq {

ErrorReport error_norms(const std::vector<double>& exact,
                        const std::vector<double>& computed) {
  if (exact.size() != computed.size())
    throw std::invalid_argument("error_norms: length mismatch");
  if (exact.empty()) throw std::invalid_argument("error_norms: empty input");

  double mass = 0.0, weighted = 0.0, sq = 0.0, abs_sum = 0.0, max_abs = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double e = exact[i] - computed[i];
    mass += exact[i];
    weighted += e * e * exact[i];
    sq += e * e;
    abs_sum += std::abs(e);
    max_abs = std::max(max_abs, std::abs(e));
  }
  if (mass == 0.0)
    throw DegenerateReferenceError("error_norms: reference sums to zero");

  const double s = static_cast<double>(exact.size());
  ErrorReport r;
  r.l2p = std::sqrt(weighted / mass);
  r.l2 = std::sqrt(sq / s);
  r.l1 = abs_sum / s;
  r.linf = max_abs;
  return r;
}

std::pair<std::optional<double>, std::optional<double>>
reuse_and_alt_averages(const std::vector<StepStats>& stats) {
  double reuse_sum = 0.0, alt_sum = 0.0;
  int reuse_n = 0, alt_n = 0;
  for (const StepStats& s : stats) {
    const double total = s.reuse + s.alt + s.fresh;
    if (total <= 0.0) continue;
    if (s.step >= 2) {
      alt_sum += s.alt / total;
      ++alt_n;
    }
    if (s.step >= 3) {
      reuse_sum += s.reuse / total;
      ++reuse_n;
    }
  }
  std::optional<double> reuse, alt;
  if (reuse_n > 0) reuse = 100.0 * reuse_sum / reuse_n;
  if (alt_n > 0) alt = 100.0 * alt_sum / alt_n;
  return {reuse, alt};
}

double mass_estimate(const Mesh& mesh, double delta_min) {
  const int dim = mesh.dim();
  const std::vector<PointId> ids = mesh.alive_ids();
  if (ids.empty()) return 0.0;

  if (dim == 1) {
    std::vector<std::pair<double, double>> pts; // (x, density)
    pts.reserve(ids.size());
    for (PointId id : ids) pts.emplace_back(mesh.point(id)[0], mesh.density(id));
    std::sort(pts.begin(), pts.end());
    double mass = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      mass += (pts[i + 1].first - pts[i].first) * (pts[i + 1].second + pts[i].second) / 2.0;
    return mass;
  }

  if (dim == 2 || dim == 3) {
    Matrix pts(static_cast<Eigen::Index>(ids.size()), dim);
    for (std::size_t i = 0; i < ids.size(); ++i)
      pts.row(static_cast<Eigen::Index>(i)) = mesh.point(ids[i]).transpose();
    const Triangulation tri = delaunay(pts);
    double fact = 1.0;
    for (int i = 2; i <= dim; ++i) fact *= i;
    double mass = 0.0;
    Matrix edges(dim, dim);
    for (const auto& s : tri.simplices) {
      for (int i = 0; i < dim; ++i)
        edges.row(i) = pts.row(s[static_cast<std::size_t>(i + 1)]) - pts.row(s[0]);
      const double vol = std::abs(edges.determinant()) / fact;
      double mean = 0.0;
      for (int v : s) mean += mesh.density(ids[static_cast<std::size_t>(v)]);
      mass += vol * mean / (dim + 1);
    }
    return mass;
  }

  double total = 0.0;
  for (PointId id : ids) total += mesh.density(id);
  return std::pow(delta_min, dim) * total;
}

} // namespace dtq
