#pragma once

#include <functional>
#include <optional>
#include <string>

#include "dtq/types.hpp"

namespace dtq {

/// An autonomous Ito SDE dX = f(X) dt + g(X) dW on R^N.
struct SdeProblem {
  std::string name;
  int dim = 0;
  std::function<Vector(const Vector&)> drift;     // f: R^N -> R^N
  std::function<Matrix(const Vector&)> diffusion; // g: R^N -> R^{N x N}
  // Closed-form density p(x, t) for t > 0, when one exists.
  std::function<double(const Vector&, double)> exact_solution;

  bool has_exact() const { return static_cast<bool>(exact_solution); }
};

/// Looks up a built-in problem. Accepts a bare name ("spiral2d") or a name
/// with a parenthesized argument list ("constNd(4, 1, 0.6)"). Available:
///   const1d                      f = 2,   g = 1
///   movinghill2d(C1=1, C2=1)     f = (C1, 0),  g = C2 I
///   erf2d                        f = 2 erf(10 x_i),  g = 0.75 I
///   spiral2d                     rotating drift,  g = 0.6 I
///   nonconstdiff2d               state-dependent g
///   constNd(N=3, C1=1, C2=0.6)   f = C1 e_1,  g = C2 I_N
///   erf3d                        3D version of erf2d
/// Throws NotFoundError for unknown names, ValidationError for bad args.
SdeProblem builtin_problem(const std::string& name);

/// One Euler-Maruyama step from y is Gaussian with these parameters.
struct KernelParams {
  Vector mean; // y + f(y) h
  Matrix cov;  // h g(y) g(y)^T
};

KernelParams kernel_params(const SdeProblem& problem, const Vector& y, double h);

/// Multivariate normal density with the (2 pi)^N normalizer and the usual
/// 1/2 in the exponent. Throws InvalidKernelError if cov is not SPD.
double kernel_eval(const KernelParams& params, const Vector& x);

/// Reusable evaluator for one transition kernel G(., y): the Cholesky factor
/// of the covariance is computed once so repeated (log-)evaluations are a
/// triangular solve each.
class TransitionKernel {
public:
  explicit TransitionKernel(const KernelParams& params);

  double log_eval(const Vector& x) const;
  double operator()(const Vector& x) const;

  const Vector& mean() const { return mean_; }
  const Matrix& chol_l() const { return chol_l_; }

private:
  Vector mean_;
  Matrix chol_l_;
  double log_norm_ = 0.0; // -N/2 log(2 pi) - sum log L_ii
};

/// Evaluates problem.exact_solution; throws NotFoundError if absent.
double exact_density(const SdeProblem& problem, const Vector& x, double t);

} // namespace dtq
