#include "dtq/laplace_fit.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dtq/polynomial_basis.hpp"

namespace dtq {

std::optional<QuadraticFit> fit_log_quadratic(const Matrix& points, const Vector& psi) {
  const int n = static_cast<int>(points.cols());
  const Eigen::Index m = points.rows();
  if (psi.size() != m)
    throw std::invalid_argument("fit_log_quadratic: points/psi size mismatch");
  const MultiIndexSet set = MultiIndexSet::full_degree(n, 2);
  if (m < set.size())
    throw std::invalid_argument("fit_log_quadratic: need at least C(N+2,2) points");
  if (!psi.allFinite() || !points.allFinite()) return std::nullopt;

  // Monomial Vandermonde M_{i,v} = prod_l eta_{i,l}^{alpha_v,l}.
  Matrix M(m, set.size());
  for (Eigen::Index i = 0; i < m; ++i)
    for (int v = 0; v < set.size(); ++v) {
      double val = 1.0;
      for (int l = 0; l < n; ++l)
        for (int p = 0; p < set[v][l]; ++p) val *= points(i, l);
      M(i, v) = val;
    }

  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  if (qr.rank() < set.size()) return std::nullopt;
  const Vector tau = qr.solve(psi);
  if (!tau.allFinite()) return std::nullopt;

  QuadraticFit fit;
  fit.d = Vector::Zero(n);
  fit.A = Matrix::Zero(n, n);
  std::vector<int> alpha(n, 0);
  fit.c = tau[set.find(alpha)];
  for (int l = 0; l < n; ++l) {
    std::fill(alpha.begin(), alpha.end(), 0);
    alpha[l] = 1;
    fit.d[l] = tau[set.find(alpha)];
    alpha[l] = 2;
    fit.A(l, l) = tau[set.find(alpha)];
    for (int u = l + 1; u < n; ++u) {
      std::fill(alpha.begin(), alpha.end(), 0);
      alpha[l] = 1;
      alpha[u] = 1;
      const double cross = tau[set.find(alpha)] / 2.0;
      fit.A(l, u) = cross;
      fit.A(u, l) = cross;
    }
  }
  return fit;
}

std::optional<GaussianWeight> to_gaussian(const QuadraticFit& fit) {
  const int n = static_cast<int>(fit.d.size());
  Eigen::LLT<Matrix> llt_a(fit.A);
  if (llt_a.info() != Eigen::Success) return std::nullopt;

  GaussianWeight w;
  w.sigma_inv = fit.A;
  w.mu = -0.5 * llt_a.solve(fit.d);
  const Matrix sigma = llt_a.solve(Matrix::Identity(n, n));
  Eigen::LLT<Matrix> llt_s(sigma);
  if (llt_s.info() != Eigen::Success) return std::nullopt;
  w.chol_l = llt_s.matrixL();
  // C = exp(-psi~(mu)); with mu = -A^{-1} d / 2, psi~(mu) = c + d.mu / 2.
  w.log_c = -(fit.c + 0.5 * fit.d.dot(w.mu));
  return w;
}

double weight_log_norm(const GaussianWeight& w) {
  double log_det_sigma = 0.0;
  for (Eigen::Index i = 0; i < w.chol_l.rows(); ++i)
    log_det_sigma += 2.0 * std::log(w.chol_l(i, i));
  const double n = static_cast<double>(w.chol_l.rows());
  return -0.5 * (n * std::log(std::numbers::pi) + log_det_sigma);
}

double weight_log_eval(const GaussianWeight& w, const Vector& x) {
  const Vector z = w.chol_l.triangularView<Eigen::Lower>().solve(x - w.mu);
  return weight_log_norm(w) - z.squaredNorm();
}

double weight_eval(const GaussianWeight& w, const Vector& x) {
  return std::exp(weight_log_eval(w, x));
}

} // namespace dtq
