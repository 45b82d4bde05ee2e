#include "dtq/trapezoid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dtq/errors.hpp"

namespace dtq {

namespace {

// Splits [0, n) into roughly equal chunks and runs fn(begin, end) on each.
void parallel_ranges(std::int64_t n, int threads,
                     const std::function<void(std::int64_t, std::int64_t)>& fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::int64_t b = t * chunk;
    const std::int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  for (auto& th : pool) th.join();
}

std::vector<TransitionKernel> source_kernels(const TensorGrid& grid,
                                             const SdeProblem& problem, double h) {
  const std::int64_t s = grid.size();
  std::vector<TransitionKernel> kernels;
  kernels.reserve(static_cast<std::size_t>(s));
  for (std::int64_t i = 0; i < s; ++i)
    kernels.emplace_back(kernel_params(problem, grid.point(i), h));
  return kernels;
}

} // namespace

std::int64_t TensorGrid::size() const {
  std::int64_t n = 1;
  for (int c : counts) n *= c;
  return n;
}

Vector TensorGrid::point(std::int64_t flat) const {
  Vector x(dim);
  for (int d = dim - 1; d >= 0; --d) {
    const std::int64_t n = counts[static_cast<std::size_t>(d)];
    x[d] = lo[d] + kappa * static_cast<double>(flat % n);
    flat /= n;
  }
  return x;
}

Vector TensorGrid::hi() const {
  Vector x = lo;
  for (int d = 0; d < dim; ++d) x[d] += kappa * (counts[static_cast<std::size_t>(d)] - 1);
  return x;
}

double TensorGrid::interpolate(const std::vector<double>& values, const Vector& x) const {
  if (static_cast<std::int64_t>(values.size()) != size())
    throw std::invalid_argument("interpolate: values length mismatch");
  std::vector<std::int64_t> base(static_cast<std::size_t>(dim));
  std::vector<double> frac(static_cast<std::size_t>(dim));
  std::vector<std::int64_t> stride(static_cast<std::size_t>(dim), 1);
  for (int d = dim - 2; d >= 0; --d)
    stride[static_cast<std::size_t>(d)] =
        stride[static_cast<std::size_t>(d + 1)] * counts[static_cast<std::size_t>(d + 1)];
  for (int d = 0; d < dim; ++d) {
    const int n = counts[static_cast<std::size_t>(d)];
    double u = (x[d] - lo[d]) / kappa;
    if (n == 1) {
      base[static_cast<std::size_t>(d)] = 0;
      frac[static_cast<std::size_t>(d)] = 0.0;
      continue;
    }
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(u));
    i0 = std::min<std::int64_t>(i0, n - 2);
    base[static_cast<std::size_t>(d)] = i0;
    frac[static_cast<std::size_t>(d)] = u - static_cast<double>(i0);
  }
  double out = 0.0;
  for (int corner = 0; corner < (1 << dim); ++corner) {
    double w = 1.0;
    std::int64_t flat = 0;
    for (int d = 0; d < dim; ++d) {
      const bool high = (corner >> d) & 1;
      const int n = counts[static_cast<std::size_t>(d)];
      const std::int64_t idx =
          base[static_cast<std::size_t>(d)] + ((high && n > 1) ? 1 : 0);
      w *= high ? frac[static_cast<std::size_t>(d)] : 1.0 - frac[static_cast<std::size_t>(d)];
      flat += idx * stride[static_cast<std::size_t>(d)];
    }
    if (w != 0.0) out += w * values[static_cast<std::size_t>(flat)];
  }
  return out;
}

TensorGrid tensor_mesh_from_adaptive(const Vector& adaptive_min, const Vector& adaptive_max,
                                     double buffer, double kappa) {
  const int dim = static_cast<int>(adaptive_min.size());
  if (adaptive_max.size() != dim) throw std::invalid_argument("extent dims differ");
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  if (buffer < 0.0) throw std::invalid_argument("buffer must be nonnegative");
  TensorGrid grid;
  grid.dim = dim;
  grid.kappa = kappa;
  grid.lo = Vector(dim);
  grid.counts.resize(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const double width = adaptive_max[d] - adaptive_min[d];
    if (!(width > 0.0)) throw std::invalid_argument("extent max must exceed min");
    const double pad = (buffer / 2.0) * width;
    grid.lo[d] = adaptive_min[d] - pad;
    const double span = width + 2.0 * pad;
    // last point lands at or just past the padded top
    grid.counts[static_cast<std::size_t>(d)] =
        static_cast<int>(std::ceil(span / kappa - 1e-9)) + 1;
  }
  return grid;
}

std::vector<double> trapezoid_step(const TensorGrid& grid, const std::vector<double>& densities,
                                   const SdeProblem& problem, double h) {
  const std::int64_t s = grid.size();
  if (static_cast<std::int64_t>(densities.size()) != s)
    throw std::invalid_argument("trapezoid_step: densities length mismatch");
  const auto kernels = source_kernels(grid, problem, h);
  const double cell = std::pow(grid.kappa, grid.dim);
  std::vector<double> out(static_cast<std::size_t>(s), 0.0);
  for (std::int64_t j = 0; j < s; ++j) {
    const Vector y = grid.point(j);
    double acc = 0.0;
    for (std::int64_t i = 0; i < s; ++i)
      acc += kernels[static_cast<std::size_t>(i)](y) * densities[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(j)] = cell * acc;
  }
  return out;
}

TrapezoidRun run_trapezoid(const TensorGrid& grid, const SdeProblem& problem, double h,
                           double end_time, const std::vector<double>& snapshot_times,
                           int threads, std::int64_t dense_budget_bytes,
                           std::int64_t hard_limit_bytes) {
  if (problem.dim != grid.dim) throw std::invalid_argument("grid/problem dim mismatch");
  if (!(h > 0.0) || !(end_time > 0.0)) throw std::invalid_argument("h and end_time must be positive");
  const std::int64_t s = grid.size();
  const std::int64_t dense_bytes = 8 * s * s;
  if (dense_bytes > hard_limit_bytes)
    throw ResourceLimitError("dense transition matrix for " + std::to_string(s) +
                                 " grid points needs " + std::to_string(dense_bytes) +
                                 " bytes, over the hard limit of " +
                                 std::to_string(hard_limit_bytes),
                             static_cast<std::size_t>(dense_bytes));

  const auto wall_start = std::chrono::steady_clock::now();
  const int n_steps = std::max(1, static_cast<int>(std::llround(end_time / h)));

  // snapshot step -> requested times (several requests may share a step)
  std::vector<std::pair<int, double>> snaps;
  for (double t : snapshot_times) {
    const int n = static_cast<int>(std::llround(t / h));
    if (n >= 1 && n <= n_steps) snaps.emplace_back(n, t);
  }
  std::sort(snaps.begin(), snaps.end());

  TrapezoidRun run;
  std::vector<double> p(static_cast<std::size_t>(s));
  const TransitionKernel origin(kernel_params(problem, Vector::Zero(grid.dim), h));
  for (std::int64_t j = 0; j < s; ++j)
    p[static_cast<std::size_t>(j)] = origin(grid.point(j));

  const double cell = std::pow(grid.kappa, grid.dim);
  const bool dense = dense_bytes <= dense_budget_bytes;
  Matrix g;
  std::vector<TransitionKernel> kernels;
  if (n_steps > 1) {
    if (dense) {
      kernels = source_kernels(grid, problem, h);
      g.resize(s, s);
      parallel_ranges(s, threads, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t j = b; j < e; ++j) {
          const Vector y = grid.point(j);
          for (std::int64_t i = 0; i < s; ++i)
            g(j, i) = kernels[static_cast<std::size_t>(i)](y);
        }
      });
      kernels.clear();
    } else {
      kernels = source_kernels(grid, problem, h);
    }
  }

  auto record_snaps = [&](int step) {
    for (const auto& [n, t] : snaps)
      if (n == step) run.snapshots.emplace_back(t, p);
  };
  record_snaps(1);

  std::vector<double> next(static_cast<std::size_t>(s));
  for (int step = 2; step <= n_steps; ++step) {
    if (dense) {
      Eigen::Map<const Vector> pv(p.data(), s);
      Eigen::Map<Vector> nv(next.data(), s);
      nv.noalias() = cell * (g * pv);
    } else {
      parallel_ranges(s, threads, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t j = b; j < e; ++j) {
          const Vector y = grid.point(j);
          double acc = 0.0;
          for (std::int64_t i = 0; i < s; ++i)
            acc += kernels[static_cast<std::size_t>(i)](y) * p[static_cast<std::size_t>(i)];
          next[static_cast<std::size_t>(j)] = cell * acc;
        }
      });
    }
    p.swap(next);
    record_snaps(step);
  }

  run.steps = n_steps;
  run.final_time = h * n_steps;
  run.final_density = p;
  if (problem.has_exact()) {
    std::vector<double> exact(static_cast<std::size_t>(s));
    for (std::int64_t j = 0; j < s; ++j)
      exact[static_cast<std::size_t>(j)] = exact_density(problem, grid.point(j), run.final_time);
    run.errors_final = error_norms(exact, p);
  }
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return run;
}

} // namespace dtq
