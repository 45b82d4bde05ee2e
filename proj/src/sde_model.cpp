#include "dtq/sde_model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>
#include <vector>

#include "dtq/errors.hpp"

namespace dtq {

namespace {

// Gaussian density with mean shift*e1 and variance var per coordinate.
double isotropic_gaussian(const Vector& x, double shift, double var) {
  const int n = static_cast<int>(x.size());
  Vector r = x;
  r[0] -= shift;
  return std::pow(2.0 * std::numbers::pi * var, -0.5 * n) *
         std::exp(-0.5 * r.squaredNorm() / var);
}

struct ParsedName {
  std::string base;
  std::vector<double> args;
};

ParsedName parse_problem_name(const std::string& name) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  const auto open = name.find('(');
  if (open == std::string::npos) return {trim(name), {}};
  const auto close = name.rfind(')');
  if (close == std::string::npos || close < open)
    throw ValidationError("unbalanced parentheses in problem name: " + name);
  ParsedName out;
  out.base = trim(name.substr(0, open));
  std::string inner = name.substr(open + 1, close - open - 1);
  std::size_t pos = 0;
  while (pos <= inner.size() && !inner.empty()) {
    const auto comma = inner.find(',', pos);
    const std::string tok =
        trim(inner.substr(pos, comma == std::string::npos ? std::string::npos
                                                          : comma - pos));
    if (tok.empty())
      throw ValidationError("empty argument in problem name: " + name);
    try {
      std::size_t used = 0;
      out.args.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ValidationError("bad numeric argument '" + tok +
                            "' in problem name: " + name);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

SdeProblem make_const_nd(int n, double c1, double c2, const std::string& name) {
  if (n < 1) throw ValidationError("constNd dimension must be >= 1");
  SdeProblem p;
  p.name = name;
  p.dim = n;
  p.drift = [n, c1](const Vector&) {
    Vector f = Vector::Zero(n);
    f[0] = c1;
    return f;
  };
  p.diffusion = [n, c2](const Vector&) -> Matrix {
    return c2 * Matrix::Identity(n, n);
  };
  p.exact_solution = [c1, c2](const Vector& x, double t) {
    return isotropic_gaussian(x, c1 * t, c2 * c2 * t);
  };
  return p;
}

SdeProblem make_erf_nd(int n, const std::string& name) {
  SdeProblem p;
  p.name = name;
  p.dim = n;
  p.drift = [n](const Vector& x) {
    Vector f(n);
    for (int i = 0; i < n; ++i) f[i] = 2.0 * std::erf(10.0 * x[i]);
    return f;
  };
  p.diffusion = [n](const Vector&) -> Matrix {
    return 0.75 * Matrix::Identity(n, n);
  };
  return p;
}

} // namespace

SdeProblem builtin_problem(const std::string& name) {
  const ParsedName parsed = parse_problem_name(name);
  const auto expect_args = [&](std::size_t max_count) {
    if (parsed.args.size() > max_count)
      throw ValidationError("problem '" + parsed.base + "' takes at most " +
                            std::to_string(max_count) + " arguments");
  };

  if (parsed.base == "const1d") {
    expect_args(0);
    SdeProblem p;
    p.name = "const1d";
    p.dim = 1;
    p.drift = [](const Vector&) { return Vector::Constant(1, 2.0); };
    p.diffusion = [](const Vector&) { return Matrix::Identity(1, 1); };
    p.exact_solution = [](const Vector& x, double t) {
      return isotropic_gaussian(x, 2.0 * t, t);
    };
    return p;
  }
  if (parsed.base == "movinghill2d") {
    expect_args(2);
    const double c1 = parsed.args.size() > 0 ? parsed.args[0] : 1.0;
    const double c2 = parsed.args.size() > 1 ? parsed.args[1] : 1.0;
    SdeProblem p = make_const_nd(2, c1, c2, "movinghill2d");
    return p;
  }
  if (parsed.base == "constNd") {
    expect_args(3);
    const double nd = parsed.args.size() > 0 ? parsed.args[0] : 3.0;
    if (nd != std::floor(nd))
      throw ValidationError("constNd dimension must be an integer");
    const double c1 = parsed.args.size() > 1 ? parsed.args[1] : 1.0;
    const double c2 = parsed.args.size() > 2 ? parsed.args[2] : 0.6;
    return make_const_nd(static_cast<int>(nd), c1, c2, "constNd");
  }
  if (parsed.base == "erf2d") {
    expect_args(0);
    return make_erf_nd(2, "erf2d");
  }
  if (parsed.base == "erf3d") {
    expect_args(0);
    return make_erf_nd(3, "erf3d");
  }
  if (parsed.base == "spiral2d") {
    expect_args(0);
    SdeProblem p;
    p.name = "spiral2d";
    p.dim = 2;
    p.drift = [](const Vector& x) {
      const double scale = 5.0 / (x.norm() + 10.0);
      Vector f(2);
      f[0] = scale * (4.0 * std::erf(5.0 * x[0]) + 2.0 * x[1]);
      f[1] = scale * (-2.0 * x[0] + x[1]);
      return f;
    };
    p.diffusion = [](const Vector&) -> Matrix {
      return 0.6 * Matrix::Identity(2, 2);
    };
    return p;
  }
  if (parsed.base == "nonconstdiff2d") {
    expect_args(0);
    SdeProblem p;
    p.name = "nonconstdiff2d";
    p.dim = 2;
    p.drift = [](const Vector& x) {
      Vector f(2);
      f[0] = 2.0 * std::erf(10.0 * x[0]);
      f[1] = 0.0;
      return f;
    };
    p.diffusion = [](const Vector& x) {
      Matrix g(2, 2);
      g(0, 0) = 0.01 * x[0] * x[0] + 0.7;
      g(0, 1) = 0.2;
      g(1, 0) = 0.2;
      g(1, 1) = 0.01 * x[1] * x[1] + 0.7;
      return g;
    };
    return p;
  }
  throw NotFoundError("unknown builtin problem: " + parsed.base);
}

KernelParams kernel_params(const SdeProblem& problem, const Vector& y, double h) {
  const Matrix g = problem.diffusion(y);
  KernelParams params;
  params.mean = y + problem.drift(y) * h;
  params.cov = h * (g * g.transpose());
  return params;
}

TransitionKernel::TransitionKernel(const KernelParams& params)
    : mean_(params.mean) {
  const Eigen::LLT<Matrix> llt(params.cov);
  if (llt.info() != Eigen::Success)
    throw InvalidKernelError("transition covariance is not SPD");
  chol_l_ = llt.matrixL();
  const int n = static_cast<int>(mean_.size());
  log_norm_ = -0.5 * n * std::log(2.0 * std::numbers::pi) -
              chol_l_.diagonal().array().log().sum();
}

double TransitionKernel::log_eval(const Vector& x) const {
  const Vector z = chol_l_.triangularView<Eigen::Lower>().solve(x - mean_);
  return -0.5 * z.squaredNorm() + log_norm_;
}

double TransitionKernel::operator()(const Vector& x) const {
  return std::exp(log_eval(x));
}

double kernel_eval(const KernelParams& params, const Vector& x) {
  return TransitionKernel(params)(x);
}

double exact_density(const SdeProblem& problem, const Vector& x, double t) {
  if (!problem.has_exact())
    throw NotFoundError("problem '" + problem.name + "' has no exact solution");
  return problem.exact_solution(x, t);
}

} // namespace dtq
