#pragma once

#include "kfac2l/network.hpp"

namespace kfac2l {

/** Matrix-free access to the regularized Fisher F. = (1/B) J J^T + lambda I.
 *
 *  J is the p x B matrix of per-sample gradients held implicitly by the
 *  cache (sampled-target backward pass). The oracle references the cache;
 *  the cache must outlive it.
 */
class FisherOracle {
 public:
  FisherOracle(const BatchCache& cache, const ParamLayout& layout, double lambda);

  const BatchCache& cache() const { return *m_cache; }
  const ParamLayout& layout() const { return *m_layout; }
  double lambda() const { return m_lambda; }
  Index batch_size() const { return m_cache->batch_size; }

  /// v_b = <Dtheta^(b), u>.
  Vector jt_apply(const Vector& u) const;
  /// Contribution of layer i alone: v_b = <vec(DW_i^(b)), u_i> for u_i in R^{p_i}.
  Vector layer_jt_apply(std::size_t i, const Vector& u_i) const;
  /// J v = sum_b v_b Dtheta^(b).
  Vector j_apply(const Vector& v) const;
  /// (J v)[i] = MAT^-1 of [(1 V^T) .* G_i] Abar_i^T.
  Matrix layer_j_apply(std::size_t i, const Vector& v) const;
  /// F. u
  Vector fisher_matvec(const Vector& u) const;
  /// Unregularized F materialized; guarded at p <= 5000.
  Matrix explicit_fim() const;

 private:
  const BatchCache* m_cache;
  const ParamLayout* m_layout;
  double m_lambda;
};

inline constexpr Index kExplicitFimLimit = 5000;

/// r = grad - F. delta.
Vector residual(const FisherOracle& oracle, const Vector& grad, const Vector& delta);

}  // namespace kfac2l
