#include "kfac2l/twolevel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kfac2l {

const char* to_string(CoarseKind kind) {
  switch (kind) {
    case CoarseKind::Nicolaides: return "nicolaides";
    case CoarseKind::Spectral: return "spectral";
    case CoarseKind::KrylovNico: return "krylov-nicolaides";
    case CoarseKind::KrylovResidu: return "krylov-residuals";
    case CoarseKind::Residuals: return "residuals";
    case CoarseKind::Taylor: return "taylor";
    case CoarseKind::FullSpace: return "full-space";
  }
  return "unknown";
}

Index CoarseSpace::width() const {
  Index m = 0;
  for (const auto& v : blocks) m += v.cols();
  return m;
}

std::vector<Index> CoarseSpace::block_offsets() const {
  std::vector<Index> offsets;
  Index m = 0;
  for (const auto& v : blocks) {
    offsets.push_back(m);
    m += v.cols();
  }
  return offsets;
}

Vector CoarseSpace::prolong(const Vector& beta, const ParamLayout& layout) const {
  require(beta.size() == width() && blocks.size() == layout.layers(), ErrorCode::DimensionMismatch,
          "prolong: width mismatch");
  Vector out(layout.total);
  Index m = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    layout.segment(out, i) = blocks[i] * beta.segment(m, blocks[i].cols());
    m += blocks[i].cols();
  }
  return out;
}

Vector CoarseSpace::restriction(const Vector& x, const ParamLayout& layout) const {
  require(x.size() == layout.total && blocks.size() == layout.layers(),
          ErrorCode::DimensionMismatch, "restrict: length mismatch");
  Vector out(width());
  Index m = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out.segment(m, blocks[i].cols()) = blocks[i].transpose() * layout.segment(x, i);
    m += blocks[i].cols();
  }
  return out;
}

Matrix CoarseSpace::dense(const ParamLayout& layout) const {
  Matrix r0t = Matrix::Zero(layout.total, width());
  Index m = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    r0t.block(layout.offsets[i], m, blocks[i].rows(), blocks[i].cols()) = blocks[i];
    m += blocks[i].cols();
  }
  return r0t;
}

Matrix orthonormalize(const Matrix& columns, double drop_tol) {
  Matrix q(columns.rows(), columns.cols());
  Index kept = 0;
  for (Index j = 0; j < columns.cols(); ++j) {
    Vector v = columns.col(j);
    const double original = v.norm();
    if (!(original > 0.0) || !std::isfinite(original)) continue;
    for (Index k = 0; k < kept; ++k) v -= q.col(k).dot(v) * q.col(k);
    const double remaining = v.norm();
    if (remaining <= drop_tol * original) continue;
    q.col(kept++) = v / remaining;
  }
  return q.leftCols(kept);
}

namespace {

Matrix normalized_ones(Index n) {
  return Matrix::Constant(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
}

}  // namespace

CoarseSpace build_nicolaides(const ParamLayout& layout) {
  CoarseSpace space;
  space.kind = CoarseKind::Nicolaides;
  for (std::size_t i = 0; i < layout.layers(); ++i) space.blocks.push_back(normalized_ones(layout.sizes[i]));
  return space;
}

CoarseSpace build_spectral(const std::vector<KfacBlock>& blocks) {
  CoarseSpace space;
  space.kind = CoarseKind::Spectral;
  for (const auto& block : blocks) {
    Vector v = smallest_eigvec_block(block);
    space.blocks.emplace_back(Eigen::Map<const Matrix>(v.data(), v.size(), 1));
  }
  return space;
}

CoarseSpace build_krylov(const std::vector<KfacBlock>& blocks, const std::vector<Vector>& seeds,
                         CoarseKind kind) {
  require(seeds.size() == blocks.size(), ErrorCode::DimensionMismatch,
          "build_krylov: one seed per layer required");
  CoarseSpace space;
  space.kind = kind;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Vector& seed = seeds[i];
    require(seed.size() == blocks[i].size(), ErrorCode::DimensionMismatch,
            "build_krylov: seed " + std::to_string(i) + " has the wrong length");
    require(seed.norm() > 0.0, ErrorCode::ZeroSeed,
            "build_krylov: seed for layer " + std::to_string(i) + " is zero");
    Matrix cols(seed.size(), 2);
    cols.col(0) = seed;
    cols.col(1) = blocks[i].apply_inverse(seed);
    space.blocks.push_back(orthonormalize(cols));
  }
  return space;
}

namespace {

/// Layer segments of w orthonormalized; empty layers get the Nicolaides column.
CoarseSpace from_segments(const std::vector<Vector>& ws, const ParamLayout& layout, CoarseKind kind) {
  double scale = 0.0;
  for (const auto& w : ws) scale = std::max(scale, w.norm());
  CoarseSpace space;
  space.kind = kind;
  for (std::size_t i = 0; i < layout.layers(); ++i) {
    Matrix cols(layout.sizes[i], static_cast<Index>(ws.size()));
    Index used = 0;
    for (const auto& w : ws) {
      auto seg = layout.segment(w, i);
      // Segments at rounding level relative to the whole vector carry no direction.
      if (seg.norm() > 1e-14 * scale) cols.col(used++) = seg;
    }
    Matrix v = orthonormalize(cols.leftCols(used));
    space.blocks.push_back(v.cols() == 0 ? normalized_ones(layout.sizes[i]) : v);
  }
  return space;
}

}  // namespace

CoarseSpace build_residuals(const std::vector<KfacBlock>& blocks, const ParamLayout& layout,
                            const Vector& r) {
  Vector w = kfac_apply_inverse(blocks, layout, r);
  return from_segments({w}, layout, CoarseKind::Residuals);
}

CoarseSpace build_taylor(const std::vector<KfacBlock>& blocks, const FisherOracle& oracle,
                         const Vector& r, int order) {
  require(order >= 1, ErrorCode::BadConfig, "build_taylor: order must be at least 1");
  const ParamLayout& layout = oracle.layout();
  std::vector<Vector> ws;
  ws.push_back(kfac_apply_inverse(blocks, layout, r));
  for (int j = 1; j < order; ++j)
    ws.push_back(kfac_apply_inverse(blocks, layout, oracle.fisher_matvec(ws.back())));
  return from_segments(ws, layout, CoarseKind::Taylor);
}

CoarseSpace build_full_space(const ParamLayout& layout) {
  CoarseSpace space;
  space.kind = CoarseKind::FullSpace;
  for (std::size_t i = 0; i < layout.layers(); ++i)
    space.blocks.push_back(Matrix::Identity(layout.sizes[i], layout.sizes[i]));
  return space;
}

CoarseOperator coarse_operator(const FisherOracle& oracle, const CoarseSpace& space) {
  const ParamLayout& layout = oracle.layout();
  require(space.blocks.size() == layout.layers(), ErrorCode::DimensionMismatch,
          "coarse_operator: coarse space does not match the layout");
  const Index m = space.width();
  const Index batch = oracle.batch_size();
  // Z(:, c) = J_i^T v_c for coarse column c living in layer i.
  Matrix z(batch, m);
  Index col = 0;
  for (std::size_t i = 0; i < space.blocks.size(); ++i) {
    const Matrix& v = space.blocks[i];
    require(v.rows() == layout.sizes[i], ErrorCode::DimensionMismatch,
            "coarse_operator: block " + std::to_string(i) + " has the wrong row count");
    for (Index c = 0; c < v.cols(); ++c) z.col(col++) = oracle.layer_jt_apply(i, v.col(c));
  }
  CoarseOperator op;
  op.lambda = oracle.lambda();
  op.matrix = (z.transpose() * z) / static_cast<double>(batch);
  Index off = 0;
  for (const auto& v : space.blocks) {
    op.matrix.block(off, off, v.cols(), v.cols()) += oracle.lambda() * (v.transpose() * v);
    off += v.cols();
  }
  Matrix sym = 0.5 * (op.matrix + op.matrix.transpose());
  op.matrix = std::move(sym);
  return op;
}

Vector beta_star(const CoarseOperator& op, const CoarseSpace& space, const ParamLayout& layout,
                 const Vector& r) {
  return linalg::solve_spd(op.matrix, space.restriction(r, layout));
}

Vector beta_tko(const CoarseOperator& op, const CoarseSpace& space, const ParamLayout& layout,
                const Vector& grad) {
  return linalg::solve_spd(op.matrix, space.restriction(grad, layout));
}

Vector apply_correction(const Vector& delta_kfac, const CoarseSpace& space,
                        const ParamLayout& layout, const Vector& beta) {
  return delta_kfac + space.prolong(beta, layout);
}

double gap(const CoarseOperator& op, const CoarseSpace& space, const ParamLayout& layout,
           const Vector& beta, const Vector& r) {
  require(op.matrix.rows() == beta.size(), ErrorCode::DimensionMismatch, "gap: width mismatch");
  return (op.matrix * beta).dot(beta) - 2.0 * space.prolong(beta, layout).dot(r);
}

}  // namespace kfac2l
