#pragma once

#include <utility>
#include <vector>

#include "kfac2l/network.hpp"

namespace kfac2l {

/** Kronecker factors of one layer and their damped decompositions.
 *
 *  The damped factors are A + pi sqrt(lambda) I and G + sqrt(lambda)/pi I.
 *  Their eigendecompositions are computed once and shared by the inverse
 *  application and the spectral coarse space.
 */
struct KfacBlock {
  std::size_t layer = 0;
  Matrix a;
  Matrix g;
  double pi = 1.0;
  double lambda = 0.0;
  linalg::SymEig eig_a;
  linalg::SymEig eig_g;
  Matrix inv_a;
  Matrix inv_g;
  bool positive_definite = false;

  Matrix damped_a() const;
  Matrix damped_g() const;
  Index size() const { return a.rows() * g.rows(); }

  /// vec(G.^-1 MAT(x) A.^-1) for one layer segment x.
  Vector apply_inverse(const Vector& x) const;
  /// (A. kron G.) x, the damped block applied to a segment.
  Vector apply(const Vector& x) const;
};

/** A_i = (1/B) sum_{b,t} abar abar^T and G_i = (1/(B T_i)) sum_{b,t} g g^T.
 *  For dense layers T_i = 1. Requires a cache populated by backward(). */
std::pair<Matrix, Matrix> estimate_factors(const BatchCache& cache, std::size_t i);

/** sqrt((tr(A)/dim A) / (tr(G)/dim G)); 1 when tr(G) = 0 or the ratio is not
 *  a finite positive number. */
double damping_pi(const Matrix& a, const Matrix& g);

KfacBlock make_block(std::size_t layer, Matrix a, Matrix g, double lambda);

std::vector<KfacBlock> build_blocks(const BatchCache& cache, double lambda);

/// Block-diagonal F._KFAC^-1 grad. Throws NotPositiveDefinite on a singular damped factor.
Vector kfac_apply_inverse(const std::vector<KfacBlock>& blocks, const ParamLayout& layout,
                          const Vector& grad);

/// Eigenvector of the smallest eigenvalue of A. kron G., unit norm.
Vector smallest_eigvec_block(const KfacBlock& block);

}  // namespace kfac2l
