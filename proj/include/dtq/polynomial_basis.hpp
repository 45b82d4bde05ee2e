#pragma once

#include <optional>
#include <vector>

#include "dtq/types.hpp"

namespace dtq {

/// Set of N-dimensional polynomial multi-indices in graded order: ascending
/// total degree, lexicographically descending within a degree. The first
/// index is always the zero index.
class MultiIndexSet {
public:
  /// First `count` multi-indices of the graded sequence.
  static MultiIndexSet graded(int dim, int count);
  /// All multi-indices with |alpha| <= degree (a prefix of the graded order).
  static MultiIndexSet full_degree(int dim, int degree);
  /// Number of multi-indices with |alpha| <= degree, i.e. C(dim+degree, dim).
  static int count_up_to_degree(int dim, int degree);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(indices_.size()); }
  const std::vector<int>& operator[](int i) const { return indices_[i]; }
  /// Largest single-component exponent over all indices.
  int max_component() const { return max_component_; }
  /// Position of `alpha` in the set, or -1.
  int find(const std::vector<int>& alpha) const;

private:
  MultiIndexSet(int dim, std::vector<std::vector<int>> indices);
  int dim_ = 0;
  int max_component_ = 0;
  std::vector<std::vector<int>> indices_;
};

/// Orthonormal Hermite polynomial h_d for the weight pi^{-1/2} exp(-z^2):
/// h_0 = 1, h_1(z) = sqrt(2) z,
/// h_{d+1}(z) = z sqrt(2/(d+1)) h_d(z) - sqrt(d/(d+1)) h_{d-1}(z).
double hermite_eval(int degree, double zeta);

/// h_0..h_degree at one point; out must hold degree+1 values.
void hermite_eval_upto(int degree, double zeta, double* out);

/// Tensor-product basis values phi_i(zeta) = prod_l h_{alpha_i,l}(zeta_l).
/// The first entry is always 1.
Vector basis_eval(const MultiIndexSet& set, const Vector& zeta);

/// Vandermonde with rows phi(zeta_i) for each row zeta_i of `points`.
Matrix basis_vandermonde(const MultiIndexSet& set, const Matrix& points);

/// Interpolatory quadrature weights for the normalized Gaussian weight in
/// mapped coordinates: solve V^T w = e_1 where V_ij = phi_j(zeta_i).
struct InterpolatoryRule {
  Vector weights;
  double condition = 0.0; ///< Gamma = ||w||_1; 1 is optimal.
};

/// nodes: m x N, one node per row; set must have exactly m indices.
/// Returns nullopt when the Vandermonde is numerically singular.
std::optional<InterpolatoryRule> interpolatory_weights(const Matrix& nodes,
                                                       const MultiIndexSet& set);

/// Weighted Leja node selection: the first m row-pivot indices of a partially
/// pivoted LU of the weighted Vandermonde sqrt(W(zeta_i)) phi_j(zeta_i), with
/// W the standard normalized Gaussian weight exp(-|zeta|^2). Equivalent to
/// greedy maximization of the weighted Vandermonde determinant growth; ties
/// take the smallest row index. Returns nullopt when the candidate set is
/// degenerate (rank collapse before m pivots).
std::optional<std::vector<int>> leja_select(const Matrix& candidates,
                                            const MultiIndexSet& set, int m);

/// Precomputed Leja rule for the standard weight exp(-|zeta|^2) on a dense
/// deterministic candidate cloud over [-3.5, 3.5]^N: equispaced grid for
/// N <= 2, Halton points otherwise. Memoized per (dim, m); thread-safe.
struct StandardRule {
  Matrix nodes; ///< m x N
  Vector weights;
  double condition = 0.0;
};
const StandardRule& standard_leja_nodes(int dim, int m);

} // namespace dtq
