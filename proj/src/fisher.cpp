#include "kfac2l/fisher.hpp"

#include <string>

namespace kfac2l {

FisherOracle::FisherOracle(const BatchCache& cache, const ParamLayout& layout, double lambda)
    : m_cache(&cache), m_layout(&layout), m_lambda(lambda) {
  require(cache.layers.size() == layout.layers(), ErrorCode::DimensionMismatch,
          "FisherOracle: cache and layout disagree on the layer count");
  require(lambda >= 0.0, ErrorCode::DimensionMismatch, "FisherOracle: negative lambda");
}

Vector FisherOracle::layer_jt_apply(std::size_t i, const Vector& u_i) const {
  const auto& lc = m_cache->layers[i];
  require(u_i.size() == m_layout->sizes[i], ErrorCode::DimensionMismatch,
          "layer_jt_apply: segment length mismatch");
  Eigen::Map<const Matrix> u_mat(u_i.data(), m_layout->rows[i], m_layout->cols[i]);
  // Column (b,t) of P is MAT(u_i) abar_{b,t}; contract with g_{b,t}.
  Matrix p = u_mat * lc.abar;
  Eigen::RowVectorXd per_col = lc.g.cwiseProduct(p).colwise().sum();
  const Index t = lc.locations;
  Vector v(m_cache->batch_size);
  for (Index b = 0; b < m_cache->batch_size; ++b) v(b) = per_col.segment(b * t, t).sum();
  return v;
}

Vector FisherOracle::jt_apply(const Vector& u) const {
  require(u.size() == m_layout->total, ErrorCode::DimensionMismatch,
          "jt_apply: u has length " + std::to_string(u.size()) + ", expected " +
              std::to_string(m_layout->total));
  Vector v = Vector::Zero(m_cache->batch_size);
  for (std::size_t i = 0; i < m_layout->layers(); ++i) v += layer_jt_apply(i, m_layout->segment(u, i));
  return v;
}

Matrix FisherOracle::layer_j_apply(std::size_t i, const Vector& v) const {
  const auto& lc = m_cache->layers[i];
  const Index t = lc.locations;
  // Duplicate each v_b across the T_i locations of sample b.
  Eigen::RowVectorXd dup(t * m_cache->batch_size);
  for (Index b = 0; b < m_cache->batch_size; ++b) dup.segment(b * t, t).setConstant(v(b));
  Matrix weighted = lc.g.array().rowwise() * dup.array();
  return weighted * lc.abar.transpose();
}

Vector FisherOracle::j_apply(const Vector& v) const {
  require(v.size() == m_cache->batch_size, ErrorCode::DimensionMismatch,
          "j_apply: v has length " + std::to_string(v.size()) + ", expected " +
              std::to_string(m_cache->batch_size));
  Vector out(m_layout->total);
  for (std::size_t i = 0; i < m_layout->layers(); ++i) {
    Matrix m = layer_j_apply(i, v);
    m_layout->segment(out, i) = linalg::vec(m);
  }
  return out;
}

Vector FisherOracle::fisher_matvec(const Vector& u) const {
  require(m_cache->batch_size > 0, ErrorCode::EmptyBatch, "fisher_matvec: empty batch");
  Vector jtu = jt_apply(u);
  return j_apply(jtu) / static_cast<double>(m_cache->batch_size) + m_lambda * u;
}

Matrix FisherOracle::explicit_fim() const {
  require(m_layout->total <= kExplicitFimLimit, ErrorCode::SizeGuard,
          "explicit_fim: p = " + std::to_string(m_layout->total) + " exceeds the limit of " +
              std::to_string(kExplicitFimLimit));
  require(m_cache->batch_size > 0, ErrorCode::EmptyBatch, "explicit_fim: empty batch");
  Matrix j = PerSampleGrad(*m_cache, *m_layout).jacobian();
  Matrix f = (j * j.transpose()) / static_cast<double>(m_cache->batch_size);
  // Mirror so the result is symmetric bit for bit.
  Matrix sym = f.selfadjointView<Eigen::Upper>();
  return sym;
}

Vector residual(const FisherOracle& oracle, const Vector& grad, const Vector& delta) {
  require(grad.size() == delta.size(), ErrorCode::DimensionMismatch, "residual: length mismatch");
  return grad - oracle.fisher_matvec(delta);
}

}  // namespace kfac2l
