#pragma once

#include <string>
#include <vector>

#include "kfac2l/fisher.hpp"
#include "kfac2l/kfac.hpp"

namespace kfac2l {

enum class CoarseKind { Nicolaides, Spectral, KrylovNico, KrylovResidu, Residuals, Taylor, FullSpace };

const char* to_string(CoarseKind kind);

/** Block-diagonal coarse basis R0^T = diag(V_1, ..., V_l).
 *
 *  Every V_i has orthonormal columns. prolong() maps beta in R^m to R0^T beta;
 *  restriction() maps x in R^p to R0 x.
 */
struct CoarseSpace {
  CoarseKind kind = CoarseKind::Nicolaides;
  std::vector<Matrix> blocks;

  Index width() const;
  std::vector<Index> block_offsets() const;
  Vector prolong(const Vector& beta, const ParamLayout& layout) const;
  Vector restriction(const Vector& x, const ParamLayout& layout) const;
  /// R0^T as a dense p x m matrix (tests and small problems only).
  Matrix dense(const ParamLayout& layout) const;
};

/// R0 F. R0^T assembled matrix-free.
struct CoarseOperator {
  Matrix matrix;
  double lambda = 0.0;
};

/** Modified Gram-Schmidt. Columns whose remaining norm falls below
 *  drop_tol times their original norm are discarded. */
Matrix orthonormalize(const Matrix& columns, double drop_tol = 1e-10);

CoarseSpace build_nicolaides(const ParamLayout& layout);
CoarseSpace build_spectral(const std::vector<KfacBlock>& blocks);
/// V_i = orth[v_i, [F._KFAC]_ii^-1 v_i]; a collinear second column is dropped.
CoarseSpace build_krylov(const std::vector<KfacBlock>& blocks, const std::vector<Vector>& seeds,
                         CoarseKind kind = CoarseKind::KrylovNico);
/// V_i = normalize([F._KFAC]_ii^-1 r[i]); zero segments fall back to Nicolaides.
CoarseSpace build_residuals(const std::vector<KfacBlock>& blocks, const ParamLayout& layout,
                            const Vector& r);
/** w_1 = F._KFAC^-1 r, w_{j+1} = F._KFAC^-1 F. w_j, V_i = orth[w_1[i] .. w_q[i]].
 *  Layers whose columns all vanish fall back to Nicolaides. */
CoarseSpace build_taylor(const std::vector<KfacBlock>& blocks, const FisherOracle& oracle,
                         const Vector& r, int order);
/// V_i = I; m = p. Debug space under which the correction is the exact solve.
CoarseSpace build_full_space(const ParamLayout& layout);

/** Entries v^T F_ij w = (1/B) <J_i^T v, J_j^T w>, plus lambda V_i^T V_i on
 *  diagonal blocks, symmetrized. */
CoarseOperator coarse_operator(const FisherOracle& oracle, const CoarseSpace& space);

/// (R0 F. R0^T)^-1 R0 r.
Vector beta_star(const CoarseOperator& op, const CoarseSpace& space, const ParamLayout& layout,
                 const Vector& r);
/// Additive (previous-method) coefficients (R0 F. R0^T)^-1 R0 grad.
Vector beta_tko(const CoarseOperator& op, const CoarseSpace& space, const ParamLayout& layout,
                const Vector& grad);
/// delta + R0^T beta.
Vector apply_correction(const Vector& delta_kfac, const CoarseSpace& space,
                        const ParamLayout& layout, const Vector& beta);
/** E(beta) - E(0) = <R0 F. R0^T beta, beta> - 2 <R0^T beta, r>, the change in
 *  squared F.-distance to the exact regularized natural-gradient increment. */
double gap(const CoarseOperator& op, const CoarseSpace& space, const ParamLayout& layout,
           const Vector& beta, const Vector& r);

}  // namespace kfac2l
