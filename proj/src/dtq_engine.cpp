#include "dtq/dtq_engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <thread>

#include "dtq/errors.hpp"
#include "dtq/laplace_fit.hpp"
#include "dtq/polynomial_basis.hpp"
#include "dtq/triangulation.hpp"

namespace dtq {

namespace {

constexpr double kBaryTol = -1e-10; // barycentric slack when locating a simplex

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

} // namespace

void validate(const SolverConfig& config) {
  const int dim = config.problem.dim;
  if (dim < 1) throw ValidationError("problem dimension must be at least 1");
  if (!config.problem.drift || !config.problem.diffusion)
    throw ValidationError("problem must define drift and diffusion");
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ValidationError(std::string(name) + " must be positive");
  };
  positive(config.h, "h");
  positive(config.end_time, "end_time");
  positive(config.beta, "beta");
  positive(config.delta_min, "delta_min");
  positive(config.delta_max, "delta_max");
  positive(config.radius, "radius");
  positive(config.epsilon, "epsilon");
  positive(config.cond_alt, "cond_alt");
  if (config.delta_max < config.delta_min)
    throw ValidationError("delta_max must be at least delta_min");
  const int fit_min = MultiIndexSet::count_up_to_degree(dim, 2);
  if (config.lp_q < fit_min)
    throw ValidationError("lp_q must be at least (N+1)(N+2)/2 = " + std::to_string(fit_min));
  if (config.laplace_nn < fit_min)
    throw ValidationError("laplace_nn must be at least (N+1)(N+2)/2 = " + std::to_string(fit_min));
  if (config.candidate_size < config.lp_q)
    throw ValidationError("candidate_size must be at least lp_q");
  for (int v : {config.step_ac, config.step_a, config.step_rc, config.step_r})
    if (v < 1) throw ValidationError("step schedule values must be positive");
  if (config.threads < 1) throw ValidationError("threads must be positive");
}

/// Immutable view of the mesh at the start of a sweep. Densities and source
/// kernels are indexed by row (ascending id order); the interpolation pieces
/// are built lazily by the first alternative update of the step.
struct AdaptiveSolver::Frozen {
  std::vector<PointId> ids;
  std::vector<int> row_of; // id -> row, -1 when not frozen
  Matrix points;           // s x N
  std::vector<double> density;
  std::vector<TransitionKernel> kernels;
  double min_density = 0.0;

  std::atomic<bool> interp_ready{false};
  bool interp_degenerate = false; // triangulation failed; fall back to IDW
  std::vector<std::pair<double, double>> sorted1d;
  Triangulation tri;
  std::vector<std::vector<int>> incident;            // vertex row -> cells
  std::vector<std::pair<Vector, Vector>> hull_faces; // (base point, unit outward normal)
};

struct AdaptiveSolver::FitOutcome {
  GaussianWeight weight; // mu in mesh coordinates
};

AdaptiveSolver::AdaptiveSolver(SolverConfig config)
    : config_(std::move(config)),
      mesh_(std::max(1, config_.problem.dim)),
      quad_set_(MultiIndexSet::graded(std::max(1, config_.problem.dim),
                                      std::max(1, config_.lp_q))) {
  validate(config_);
  mesh_ = initial_mesh(config_.problem.dim, config_.delta_min, config_.radius);
}

void AdaptiveSolver::first_step() {
  const int dim = config_.problem.dim;
  const TransitionKernel origin(kernel_params(config_.problem, Vector::Zero(dim), config_.h));
  for (PointId id : mesh_.alive_ids()) mesh_.set_density(id, origin(mesh_.point(id)));
}

void AdaptiveSolver::prepare_step() {
  auto f = std::make_shared<Frozen>();
  f->ids = mesh_.alive_ids();
  const auto s = f->ids.size();
  const int dim = config_.problem.dim;
  f->row_of.assign(static_cast<std::size_t>(mesh_.end_id()), -1);
  f->points.resize(static_cast<Eigen::Index>(s), dim);
  f->density.resize(s);
  f->kernels.reserve(s);
  for (std::size_t i = 0; i < s; ++i) {
    const PointId id = f->ids[i];
    f->row_of[static_cast<std::size_t>(id)] = static_cast<int>(i);
    f->points.row(static_cast<Eigen::Index>(i)) = mesh_.point(id).transpose();
    f->density[i] = mesh_.density(id);
    f->kernels.emplace_back(kernel_params(config_.problem, mesh_.point(id), config_.h));
  }
  f->min_density = mesh_.min_density();
  frozen_ = std::move(f);
  // Touch the spatial index so sweep workers never race its construction.
  if (!frozen_->ids.empty()) mesh_.nearest_neighbors(mesh_.point(frozen_->ids[0]), 1);
}

std::optional<AdaptiveSolver::FitOutcome> AdaptiveSolver::laplace_fit_at(PointId j) const {
  const Frozen& f = *frozen_;
  const int dim = config_.problem.dim;
  const Vector& yj = mesh_.point(j);

  std::vector<PointId> fit_ids;
  const auto it = cache_.find(j);
  if (it != cache_.end() && !it->second.node_ids.empty()) {
    fit_ids = it->second.node_ids;
  } else {
    fit_ids = mesh_.nearest_neighbors(yj, config_.laplace_nn);
  }
  const int m = static_cast<int>(fit_ids.size());
  if (m < MultiIndexSet::count_up_to_degree(dim, 2)) return std::nullopt;

  Matrix centered(m, dim);
  Vector psi(m);
  for (int i = 0; i < m; ++i) {
    const int row = f.row_of[static_cast<std::size_t>(fit_ids[static_cast<std::size_t>(i)])];
    if (row < 0) return std::nullopt;
    const double p = f.density[static_cast<std::size_t>(row)];
    if (!(p > 0.0)) return std::nullopt;
    const double log_q =
        f.kernels[static_cast<std::size_t>(row)].log_eval(yj) + std::log(p);
    if (!std::isfinite(log_q)) return std::nullopt;
    psi[i] = -log_q;
    centered.row(i) = f.points.row(row) - yj.transpose();
  }
  const auto fit = fit_log_quadratic(centered, psi);
  if (!fit) return std::nullopt;
  auto gw = to_gaussian(*fit);
  if (!gw) return std::nullopt;
  gw->mu += yj; // fit ran in coordinates centered at y_j
  return FitOutcome{std::move(*gw)};
}

AdaptiveSolver::Update AdaptiveSolver::update_point(PointId j) const {
  const Frozen& f = *frozen_;
  const int dim = config_.problem.dim;
  const Vector& yj = mesh_.point(j);
  const MultiIndexSet& set = quad_set_;

  const auto quad_value = [&](const std::vector<PointId>& node_ids, const Vector& weights,
                              const GaussianWeight& gw) {
    double acc = 0.0;
    for (std::size_t i = 0; i < node_ids.size(); ++i) {
      const int row = f.row_of[static_cast<std::size_t>(node_ids[i])];
      const double p = f.density[static_cast<std::size_t>(row)];
      if (!(p > 0.0)) continue; // integrand vanishes there
      const Vector eta = f.points.row(row).transpose();
      const double log_r = f.kernels[static_cast<std::size_t>(row)].log_eval(yj) +
                           std::log(p) - weight_log_eval(gw, eta);
      acc += weights[static_cast<Eigen::Index>(i)] * std::exp(log_r);
    }
    return std::max(acc, 0.0);
  };

  const auto fit = laplace_fit_at(j);
  if (fit) {
    const GaussianWeight& gw = fit->weight;
    const auto to_zeta = [&](const std::vector<PointId>& ids) {
      Matrix z(static_cast<Eigen::Index>(ids.size()), dim);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const int row = f.row_of[static_cast<std::size_t>(ids[i])];
        const Vector shifted = f.points.row(row).transpose() - gw.mu;
        z.row(static_cast<Eigen::Index>(i)) =
            gw.chol_l.triangularView<Eigen::Lower>().solve(shifted).transpose();
      }
      return z;
    };

    const auto it = cache_.find(j);
    if (it != cache_.end() && it->second.reuse) {
      const auto rule = interpolatory_weights(to_zeta(it->second.node_ids), set);
      if (rule && rule->condition < 1.0 + config_.epsilon) {
        Update u;
        u.value = quad_value(it->second.node_ids, rule->weights, gw);
        u.method = Method::reuse;
        return u;
      }
    }

    const std::vector<PointId> cands = mesh_.nearest_neighbors(yj, config_.candidate_size);
    if (static_cast<int>(cands.size()) >= config_.lp_q) {
      const Matrix zc = to_zeta(cands);
      const auto sel = leja_select(zc, set, config_.lp_q);
      if (sel) {
        Matrix nodes(config_.lp_q, dim);
        std::vector<PointId> node_ids(static_cast<std::size_t>(config_.lp_q));
        for (int i = 0; i < config_.lp_q; ++i) {
          nodes.row(i) = zc.row((*sel)[static_cast<std::size_t>(i)]);
          node_ids[static_cast<std::size_t>(i)] =
              cands[static_cast<std::size_t>((*sel)[static_cast<std::size_t>(i)])];
        }
        const auto rule = interpolatory_weights(nodes, set);
        if (rule && rule->condition <= config_.cond_alt) {
          Update u;
          u.value = quad_value(node_ids, rule->weights, gw);
          u.method = Method::fresh;
          u.fresh_nodes = std::move(node_ids);
          u.reuse_flag = rule->condition < 1.0 + config_.epsilon;
          return u;
        }
      }
    }
  }

  Update u;
  u.value = alternative_update(j);
  u.method = Method::alt;
  return u;
}

double AdaptiveSolver::alternative_update(PointId j) const {
  const Frozen& f = *frozen_;
  const int dim = config_.problem.dim;
  const double h = config_.h;
  const Vector& yj = mesh_.point(j);

  const Vector g_drift = config_.problem.drift(yj);
  const Matrix g_diff = config_.problem.diffusion(yj);
  const Vector mu_alt = yj + h * g_drift;
  const Matrix sigma_alt = h * (g_diff * g_diff.transpose());
  const Eigen::LLT<Matrix> llt(sigma_alt);
  if (llt.info() != Eigen::Success) {
    // Degenerate diffusion at y_j; keep the point where it is.
    const int row = f.row_of[static_cast<std::size_t>(j)];
    return row >= 0 ? f.density[static_cast<std::size_t>(row)] : f.min_density;
  }
  const Matrix l_alt = llt.matrixL();

  // pi-convention weight with covariance h g g^T exactly as configured.
  double log_norm = -0.5 * dim * std::log(M_PI);
  for (int i = 0; i < dim; ++i) log_norm -= std::log(l_alt(i, i));

  const StandardRule& rule = standard_leja_nodes(dim, config_.lp_q);
  double acc = 0.0;
  for (int i = 0; i < config_.lp_q; ++i) {
    const Vector zeta = rule.nodes.row(i).transpose();
    const Vector eta = l_alt * zeta + mu_alt;
    const double p = interpolate_density(eta);
    if (!(p > 0.0)) continue;
    const TransitionKernel kernel(kernel_params(config_.problem, eta, h));
    const double log_weight = log_norm - zeta.squaredNorm();
    acc += rule.weights[i] * std::exp(kernel.log_eval(yj) + std::log(p) - log_weight);
  }
  return std::max(acc, 0.0);
}

void AdaptiveSolver::ensure_interpolation() const {
  Frozen& f = *frozen_;
  if (f.interp_ready.load(std::memory_order_acquire)) return;
  std::lock_guard<std::mutex> lock(interp_mutex_);
  if (f.interp_ready.load(std::memory_order_relaxed)) return;

  const int dim = config_.problem.dim;
  if (dim == 1) {
    f.sorted1d.reserve(f.ids.size());
    for (std::size_t i = 0; i < f.ids.size(); ++i)
      f.sorted1d.emplace_back(f.points(static_cast<Eigen::Index>(i), 0), f.density[i]);
    std::sort(f.sorted1d.begin(), f.sorted1d.end());
  } else if (dim <= 3) {
    try {
      f.tri = delaunay(f.points);
      f.incident.assign(f.ids.size(), {});
      for (std::size_t c = 0; c < f.tri.simplices.size(); ++c)
        for (int v : f.tri.simplices[c])
          f.incident[static_cast<std::size_t>(v)].push_back(static_cast<int>(c));

      // Hull faces: (N-1)-faces owned by exactly one simplex, with outward
      // unit normals, for a cheap outside-the-hull test.
      std::map<std::vector<int>, std::pair<int, int>> faces; // face -> (count, opposite)
      for (const auto& s : f.tri.simplices)
        for (std::size_t drop = 0; drop < s.size(); ++drop) {
          std::vector<int> face;
          for (std::size_t i = 0; i < s.size(); ++i)
            if (i != drop) face.push_back(s[i]);
          auto [pos, fresh] = faces.try_emplace(face, 0, s[drop]);
          ++pos->second.first;
          if (!fresh) pos->second.second = -1;
        }
      for (const auto& [face, info] : faces) {
        if (info.first != 1) continue;
        const Vector base = f.points.row(face[0]).transpose();
        Vector normal(dim);
        if (dim == 2) {
          const Vector t = f.points.row(face[1]).transpose() - base;
          normal << t[1], -t[0];
        } else {
          const Eigen::Vector3d u = f.points.row(face[1]).transpose() - base;
          const Eigen::Vector3d v = f.points.row(face[2]).transpose() - base;
          normal = u.cross(v);
        }
        const Vector opp = f.points.row(info.second).transpose();
        if (normal.dot(opp - base) > 0.0) normal = -normal;
        const double len = normal.norm();
        if (len > 0.0) f.hull_faces.emplace_back(base, normal / len);
      }
    } catch (const DegenerateGeometryError&) {
      f.interp_degenerate = true; // flat cloud: IDW still gives usable values
    }
  }
  f.interp_ready.store(true, std::memory_order_release);
}

double AdaptiveSolver::interpolate_density(const Vector& x) const {
  ensure_interpolation();
  const Frozen& f = *frozen_;
  const int dim = config_.problem.dim;

  if (dim == 1) {
    const auto& pts = f.sorted1d;
    if (pts.empty()) return 0.0;
    const double q = x[0];
    if (q < pts.front().first || q > pts.back().first) return f.min_density;
    const auto hi = std::lower_bound(pts.begin(), pts.end(), std::make_pair(q, -1.0));
    if (hi == pts.begin()) return hi->second;
    const auto lo = std::prev(hi);
    const double span = hi->first - lo->first;
    if (span <= 0.0) return lo->second;
    const double t = (q - lo->first) / span;
    return (1.0 - t) * lo->second + t * hi->second;
  }

  if (dim <= 3 && !f.interp_degenerate) {
    const auto bary_in = [&](int cell, Vector& lambda) {
      const auto& s = f.tri.simplices[static_cast<std::size_t>(cell)];
      Matrix t(dim, dim);
      const Vector v0 = f.points.row(s[0]).transpose();
      for (int i = 0; i < dim; ++i)
        t.col(i) = f.points.row(s[static_cast<std::size_t>(i + 1)]).transpose() - v0;
      const Vector rest = t.partialPivLu().solve(x - v0);
      lambda.resize(dim + 1);
      lambda[0] = 1.0 - rest.sum();
      lambda.tail(dim) = rest;
      return (lambda.array() >= kBaryTol).all();
    };
    const auto cell_value = [&](int cell, const Vector& lambda) {
      const auto& s = f.tri.simplices[static_cast<std::size_t>(cell)];
      double acc = 0.0;
      for (int i = 0; i <= dim; ++i)
        acc += lambda[i] * f.density[static_cast<std::size_t>(s[static_cast<std::size_t>(i)])];
      return std::max(acc, 0.0);
    };

    Vector lambda;
    const std::vector<PointId> nn = mesh_.nearest_neighbors(x, 4);
    std::vector<int> seen;
    for (PointId id : nn) {
      const int row = f.row_of[static_cast<std::size_t>(id)];
      if (row < 0) continue;
      for (int cell : f.incident[static_cast<std::size_t>(row)]) {
        if (std::find(seen.begin(), seen.end(), cell) != seen.end()) continue;
        seen.push_back(cell);
        if (bary_in(cell, lambda)) return cell_value(cell, lambda);
      }
    }
    for (const auto& [base, normal] : f.hull_faces) {
      const double side = normal.dot(x - base);
      if (side > 1e-12 * (1.0 + x.norm() + base.norm())) return f.min_density;
    }
    for (std::size_t cell = 0; cell < f.tri.simplices.size(); ++cell)
      if (bary_in(static_cast<int>(cell), lambda))
        return cell_value(static_cast<int>(cell), lambda);
    return f.min_density;
  }

  // Inverse-distance weighting over the fit neighborhood.
  const std::vector<PointId> nn = mesh_.nearest_neighbors(x, config_.laplace_nn);
  if (nn.empty()) return 0.0;
  double num = 0.0, den = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
  for (PointId id : nn) {
    const int row = f.row_of[static_cast<std::size_t>(id)];
    if (row < 0) continue;
    const double d2 = (f.points.row(row).transpose() - x).squaredNorm();
    if (d2 == 0.0) return f.density[static_cast<std::size_t>(row)];
    nearest = std::min(nearest, d2);
    num += f.density[static_cast<std::size_t>(row)] / d2;
    den += 1.0 / d2;
  }
  if (nearest > config_.delta_max * config_.delta_max) return f.min_density;
  return den > 0.0 ? num / den : f.min_density;
}

void AdaptiveSolver::apply_update(PointId j, const Update& update) {
  mesh_.set_density(j, std::max(update.value, 0.0));
  switch (update.method) {
    case Method::reuse:
      break;
    case Method::fresh:
      cache_[j] = CacheEntry{update.fresh_nodes, update.reuse_flag};
      break;
    case Method::alt:
      cache_.erase(j);
      break;
  }
}

void AdaptiveSolver::purge_caches() {
  for (auto it = cache_.begin(); it != cache_.end();) {
    bool ok = mesh_.alive(it->first);
    if (ok)
      for (PointId id : it->second.node_ids)
        if (!mesh_.alive(id)) {
          ok = false;
          break;
        }
    it = ok ? std::next(it) : cache_.erase(it);
  }
}

StepStats AdaptiveSolver::step(int n) {
  const auto t0 = std::chrono::steady_clock::now();
  StepStats st;
  st.step = n;

  if (n >= config_.step_ac && (n - config_.step_ac) % config_.step_a == 0) {
    const auto boundary = mesh_boundary(mesh_, 1.5 * config_.delta_max);
    st.added = add_boundary_points(mesh_, boundary, config_.beta, config_.delta_min,
                                   config_.delta_max);
  }
  if (n >= config_.step_rc && (n - config_.step_rc) % config_.step_r == 0) {
    st.removed = remove_low_density_points(mesh_, config_.beta);
    if (st.removed > 0) purge_caches();
  }

  prepare_step();
  const std::vector<PointId>& ids = frozen_->ids;
  std::vector<Update> results(ids.size());
  parallel_for(ids.size(), config_.threads,
               [&](std::size_t i) { results[i] = update_point(ids[i]); });
  for (std::size_t i = 0; i < ids.size(); ++i) {
    switch (results[i].method) {
      case Method::reuse: ++st.reuse; break;
      case Method::fresh: ++st.fresh; break;
      case Method::alt: ++st.alt; break;
    }
    apply_update(ids[i], results[i]);
  }
  st.mesh_size = mesh_.size();
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats_.push_back(st);
  return st;
}

RunResult AdaptiveSolver::run() {
  const auto wall0 = std::chrono::steady_clock::now();
  const int dim = config_.problem.dim;
  RunResult out;

  first_step();
  const int n_steps = std::max(1, static_cast<int>(std::llround(config_.end_time / config_.h)));

  out.extent_min = Vector::Constant(dim, std::numeric_limits<double>::infinity());
  out.extent_max = Vector::Constant(dim, -std::numeric_limits<double>::infinity());
  const auto absorb_extents = [&] {
    for (PointId id : mesh_.alive_ids()) {
      out.extent_min = out.extent_min.cwiseMin(mesh_.point(id));
      out.extent_max = out.extent_max.cwiseMax(mesh_.point(id));
    }
    out.peak_mesh_size = std::max(out.peak_mesh_size, mesh_.size());
  };
  const auto record_snapshots = [&](int n) {
    for (double t : config_.snapshot_times) {
      if (static_cast<int>(std::llround(t / config_.h)) != n) continue;
      MeshSnapshot snap;
      snap.time = t;
      snap.step = n;
      snap.ids = mesh_.alive_ids();
      snap.points.resize(static_cast<Eigen::Index>(snap.ids.size()), dim);
      snap.densities.resize(snap.ids.size());
      for (std::size_t i = 0; i < snap.ids.size(); ++i) {
        snap.points.row(static_cast<Eigen::Index>(i)) = mesh_.point(snap.ids[i]).transpose();
        snap.densities[i] = mesh_.density(snap.ids[i]);
      }
      out.snapshots.push_back(std::move(snap));
    }
  };

  absorb_extents();
  record_snapshots(1);
  int completed = 1;
  try {
    for (int n = 2; n <= n_steps; ++n) {
      step(n);
      completed = n;
      absorb_extents();
      record_snapshots(n);
    }
  } catch (const MeshCollapseError& e) {
    out.aborted = true;
    out.abort_reason = e.what();
  }

  out.steps = completed;
  out.final_time = config_.h * completed;
  out.stats = stats_;
  std::tie(out.avg_reuse_pct, out.avg_alt_pct) = reuse_and_alt_averages(stats_);

  out.final_ids = mesh_.alive_ids();
  out.final_points.resize(static_cast<Eigen::Index>(out.final_ids.size()), dim);
  out.final_densities.resize(out.final_ids.size());
  for (std::size_t i = 0; i < out.final_ids.size(); ++i) {
    out.final_points.row(static_cast<Eigen::Index>(i)) =
        mesh_.point(out.final_ids[i]).transpose();
    out.final_densities[i] = mesh_.density(out.final_ids[i]);
  }
  if (!out.aborted && config_.problem.has_exact()) {
    std::vector<double> exact(out.final_ids.size());
    for (std::size_t i = 0; i < out.final_ids.size(); ++i)
      exact[i] = exact_density(config_.problem,
                               out.final_points.row(static_cast<Eigen::Index>(i)).transpose(),
                               out.final_time);
    out.errors_final = error_norms(exact, out.final_densities);
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return out;
}

} // namespace dtq
