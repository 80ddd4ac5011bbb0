#include "kfac2l/kfac.hpp"

#include <cmath>
#include <string>

namespace kfac2l {

Matrix KfacBlock::damped_a() const {
  Matrix d = a;
  d.diagonal().array() += pi * std::sqrt(lambda);
  return d;
}

Matrix KfacBlock::damped_g() const {
  Matrix d = g;
  d.diagonal().array() += std::sqrt(lambda) / pi;
  return d;
}

Vector KfacBlock::apply_inverse(const Vector& x) const {
  require(positive_definite, ErrorCode::NotPositiveDefinite,
          "layer " + std::to_string(layer) + ": damped Kronecker factor is not positive definite");
  return linalg::kron_matvec(inv_a, inv_g, x);
}

Vector KfacBlock::apply(const Vector& x) const {
  return linalg::kron_matvec(damped_a(), damped_g(), x);
}

std::pair<Matrix, Matrix> estimate_factors(const BatchCache& cache, std::size_t i) {
  require(cache.batch_size > 0, ErrorCode::EmptyBatch, "estimate_factors: empty batch");
  require(i < cache.layers.size(), ErrorCode::DimensionMismatch, "estimate_factors: bad layer");
  const auto& lc = cache.layers[i];
  require(lc.g.cols() == lc.abar.cols(), ErrorCode::DimensionMismatch,
          "estimate_factors: cache has no backward pass for layer " + std::to_string(i));
  const double b = static_cast<double>(cache.batch_size);
  const double t = static_cast<double>(lc.locations);
  Matrix a = (lc.abar * lc.abar.transpose()) / b;
  Matrix g = (lc.g * lc.g.transpose()) / (b * t);
  Matrix a_sym = a.selfadjointView<Eigen::Upper>();
  Matrix g_sym = g.selfadjointView<Eigen::Upper>();
  return {std::move(a_sym), std::move(g_sym)};
}

double damping_pi(const Matrix& a, const Matrix& g) {
  const double tg = g.trace() / static_cast<double>(g.rows());
  if (tg == 0.0) return 1.0;
  const double ratio = (a.trace() / static_cast<double>(a.rows())) / tg;
  if (!std::isfinite(ratio) || ratio <= 0.0) return 1.0;
  return std::sqrt(ratio);
}

KfacBlock make_block(std::size_t layer, Matrix a, Matrix g, double lambda) {
  require(a.rows() == a.cols() && g.rows() == g.cols(), ErrorCode::DimensionMismatch,
          "make_block: factors must be square");
  require(lambda >= 0.0, ErrorCode::DimensionMismatch, "make_block: negative lambda");
  KfacBlock block;
  block.layer = layer;
  block.a = std::move(a);
  block.g = std::move(g);
  block.lambda = lambda;
  block.pi = damping_pi(block.a, block.g);
  block.eig_a = linalg::sym_eig(block.damped_a());
  block.eig_g = linalg::sym_eig(block.damped_g());
  block.positive_definite = block.eig_a.values(0) > 0.0 && block.eig_g.values(0) > 0.0 &&
                            block.eig_a.values.allFinite() && block.eig_g.values.allFinite();
  if (block.positive_definite) {
    const auto& ua = block.eig_a.vectors;
    const auto& ug = block.eig_g.vectors;
    block.inv_a = ua * block.eig_a.values.cwiseInverse().asDiagonal() * ua.transpose();
    block.inv_g = ug * block.eig_g.values.cwiseInverse().asDiagonal() * ug.transpose();
  }
  return block;
}

std::vector<KfacBlock> build_blocks(const BatchCache& cache, double lambda) {
  std::vector<KfacBlock> blocks;
  blocks.reserve(cache.layers.size());
  for (std::size_t i = 0; i < cache.layers.size(); ++i) {
    auto [a, g] = estimate_factors(cache, i);
    blocks.push_back(make_block(i, std::move(a), std::move(g), lambda));
  }
  return blocks;
}

Vector kfac_apply_inverse(const std::vector<KfacBlock>& blocks, const ParamLayout& layout,
                          const Vector& grad) {
  require(blocks.size() == layout.layers() && grad.size() == layout.total,
          ErrorCode::DimensionMismatch, "kfac_apply_inverse: blocks do not cover the layout");
  Vector out(grad.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    require(blocks[i].size() == layout.sizes[i], ErrorCode::DimensionMismatch,
            "kfac_apply_inverse: block " + std::to_string(i) + " has the wrong size");
    layout.segment(out, i) = blocks[i].apply_inverse(layout.segment(grad, i));
  }
  return out;
}

Vector smallest_eigvec_block(const KfacBlock& block) {
  Vector v = linalg::kron(block.eig_a.vectors.col(0), block.eig_g.vectors.col(0));
  return v / v.norm();
}

}  // namespace kfac2l
