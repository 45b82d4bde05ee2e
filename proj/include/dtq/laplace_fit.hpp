#pragma once

#include <optional>

#include "dtq/types.hpp"

namespace dtq {

/// Quadratic model psi(x) ~ c + d.x + x'Ax with A symmetric.
struct QuadraticFit {
  double c = 0.0;
  Vector d;
  Matrix A;
};

/// Least-squares quadratic fit of psi over the monomial basis of total degree
/// <= 2 (graded order). points: m x N with m >= C(N+2, 2).
/// Returns nullopt when psi contains non-finite values or the monomial
/// Vandermonde is rank-deficient; throws std::invalid_argument when m is too
/// small (caller bug, not a data failure).
std::optional<QuadraticFit> fit_log_quadratic(const Matrix& points, const Vector& psi);

/// Gaussian form exp(-psi~(x)) = C exp(-(x-mu)' Sigma^{-1} (x-mu)) completed
/// from a quadratic fit with SPD A. Note the convention: no 1/2 in the
/// exponent; the normalized density is (pi^N |Sigma|)^{-1/2} exp(...).
struct GaussianWeight {
  Vector mu;
  Matrix sigma_inv; ///< = A
  Matrix chol_l;    ///< lower L with L L' = Sigma = A^{-1}
  double log_c = 0.0;
};

/// nullopt when A is not symmetric positive definite.
std::optional<GaussianWeight> to_gaussian(const QuadraticFit& fit);

/// Normalized weight (pi^N |Sigma|)^{-1/2} exp(-(x-mu)' Sigma^{-1} (x-mu)).
double weight_eval(const GaussianWeight& w, const Vector& x);
double weight_log_eval(const GaussianWeight& w, const Vector& x);

/// log of the normalization constant (pi^N |Sigma|)^{-1/2}.
double weight_log_norm(const GaussianWeight& w);

} // namespace dtq
