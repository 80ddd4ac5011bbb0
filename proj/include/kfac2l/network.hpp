#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kfac2l/linalg.hpp"

namespace kfac2l {

using Index = Eigen::Index;

enum class LayerKind { Dense, Conv };

/// Pointwise nonlinearity. The relu derivative at 0 is taken to be 0.
enum class Activation { Identity, Tanh, Relu, Sigmoid };

/** SquaredError: L = 0.5 ||y - z||^2, Gaussian predictive distribution.
 *  CrossEntropy: L = -sum_k y_k log softmax(z)_k, categorical predictive distribution. */
enum class LossKind { SquaredError, CrossEntropy };

const char* to_string(Activation a);
const char* to_string(LossKind l);
Activation parse_activation(const std::string& s);
LossKind parse_loss(const std::string& s);

/** Geometry of an unrolled convolution. Images are stored channel-fastest:
 *  entry (c, y, x) of a sample lives at c + channels * (y * width + x). */
struct ConvGeometry {
  Index in_channels = 1;
  Index in_height = 1;
  Index in_width = 1;
  Index out_channels = 1;
  Index kernel_height = 1;
  Index kernel_width = 1;
  Index stride = 1;
  Index padding = 0;

  Index out_height() const { return (in_height + 2 * padding - kernel_height) / stride + 1; }
  Index out_width() const { return (in_width + 2 * padding - kernel_width) / stride + 1; }
  Index locations() const { return out_height() * out_width(); }
  /// c_{i-1} * Delta_i, the patch length without the appended 1.
  Index patch_size() const { return in_channels * kernel_height * kernel_width; }

  bool operator==(const ConvGeometry&) const = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  Activation activation = Activation::Identity;
  Index in_features = 0;   // dense only
  Index out_features = 0;  // dense only
  ConvGeometry conv;       // conv only

  static LayerSpec dense(Index in, Index out, Activation act);
  static LayerSpec convolution(const ConvGeometry& geometry, Activation act);

  /// Rows of W_i: d_i (dense) or c_i (conv).
  Index rows() const;
  /// Columns of W_i: d_{i-1} + 1 or c_{i-1} Delta_i + 1.
  Index cols() const;
  /// Spatial output locations T_i; 1 for dense layers.
  Index locations() const;
  Index input_size() const;
  Index output_size() const { return rows() * locations(); }
  Index param_count() const { return rows() * cols(); }

  bool operator==(const LayerSpec&) const = default;
};

/// Segmentation of the flat parameter vector into per-layer vec(W_i) blocks.
struct ParamLayout {
  std::vector<Index> offsets;
  std::vector<Index> sizes;
  std::vector<Index> rows;
  std::vector<Index> cols;
  Index total = 0;

  static ParamLayout from_layers(const std::vector<LayerSpec>& layers);

  std::size_t layers() const { return sizes.size(); }
  auto segment(Vector& v, std::size_t i) const { return v.segment(offsets[i], sizes[i]); }
  auto segment(const Vector& v, std::size_t i) const { return v.segment(offsets[i], sizes[i]); }
  /// MAT(v[i]) with the shape of W_i.
  Matrix mat(const Vector& v, std::size_t i) const;
};

/** Per-layer quantities captured during forward/backward.
 *
 *  Column b*T + t holds location t of sample b, so a dense layer is the T = 1
 *  case of a conv layer and every Fisher formula treats both uniformly.
 */
struct LayerCache {
  Matrix abar;  // (cols) x (T*B); last row is all ones
  Matrix s;     // (rows) x (T*B) pre-activations
  Matrix g;     // (rows) x (T*B) pre-activation derivatives, filled by backward
  Index locations = 1;
};

struct BatchCache {
  std::vector<LayerCache> layers;
  Matrix outputs;  // d_out x B
  Index batch_size = 0;
  LossKind loss = LossKind::SquaredError;
};

class Network {
 public:
  Network(std::vector<LayerSpec> layers, LossKind loss);

  const std::vector<LayerSpec>& layers() const { return m_layers; }
  const ParamLayout& layout() const { return m_layout; }
  LossKind loss() const { return m_loss; }
  Index param_count() const { return m_layout.total; }
  Index input_size() const { return m_layers.front().input_size(); }
  Index output_size() const { return m_layers.back().output_size(); }

  Vector& theta() { return m_theta; }
  const Vector& theta() const { return m_theta; }

  Eigen::Map<const Matrix> weight(std::size_t i) const;
  Eigen::Map<Matrix> weight(std::size_t i);

  /// Weights ~ N(0, 1/fan_in), biases zero, drawn from the Init stream.
  void initialize(std::uint64_t seed);

 private:
  std::vector<LayerSpec> m_layers;
  LossKind m_loss;
  ParamLayout m_layout;
  Vector m_theta;
};

/// Unrolls a batch of images (input_size x B) into patch columns with a trailing 1.
Matrix im2col(const ConvGeometry& geometry, const Matrix& input);
/// Scatter-adds patch gradients (patch_size x T*B) back onto image gradients.
void col2im_add(const ConvGeometry& geometry, const Matrix& patch_grad, Matrix& input_grad);

BatchCache forward(const Network& net, const Matrix& inputs);

/// Per-sample losses L(y^(b), z^(b)).
Vector sample_losses(LossKind loss, const Matrix& outputs, const Matrix& targets);
double mean_loss(LossKind loss, const Matrix& outputs, const Matrix& targets);

/// dL/dz for each sample.
Matrix output_gradient(LossKind loss, const Matrix& outputs, const Matrix& targets);

/** Back-propagates from the given targets, storing g_i in the cache.
 *  Returns the mean gradient (1/B) sum_b vec-concatenated DW_i^(b). */
Vector backward(const Network& net, BatchCache& cache, const Matrix& targets);

/// Same as backward() but starting from an explicit dL/dz per sample.
Vector backward_from_output_grad(const Network& net, BatchCache& cache, const Matrix& output_grad);

/** Targets drawn from the model predictive distribution: Normal(z, I) for
 *  SquaredError, Categorical(softmax(z)) as one-hot columns for CrossEntropy. */
Matrix sample_targets(const BatchCache& cache, std::uint64_t seed);

/** Builds a cache whose Fisher estimate is the exact expectation over the
 *  predictive distribution instead of a one-sample Monte-Carlo estimate.
 *  Each sample is replicated once per output unit k with dL/dz set to
 *  sqrt(K w_k) e_k (Gaussian) or sqrt(K p_k)(p - e_k) (categorical). */
BatchCache expected_fisher_cache(const Network& net, const BatchCache& forward_cache);

/** Per-sample weight gradients DW_i^(b) = sum_t g_{i,t} abar_{i-1,t}^T read
 *  from a populated cache. */
class PerSampleGrad {
 public:
  PerSampleGrad(const BatchCache& cache, const ParamLayout& layout)
      : m_cache(&cache), m_layout(&layout) {}

  Matrix layer(std::size_t i, Index b) const;
  /// Dtheta^(b), the b-th column of J.
  Vector sample(Index b) const;
  /// J in R^{p x B}.
  Matrix jacobian() const;
  /// (1/B) sum_b Dtheta^(b), accumulated in ascending sample order.
  Vector mean() const;

 private:
  const BatchCache* m_cache;
  const ParamLayout* m_layout;
};

}  // namespace kfac2l
