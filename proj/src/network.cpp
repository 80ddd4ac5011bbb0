#include "kfac2l/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "kfac2l/rng.hpp"

namespace kfac2l {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

const char* to_string(LossKind l) {
  return l == LossKind::SquaredError ? "squared" : "cross_entropy";
}

Activation parse_activation(const std::string& s) {
  if (s == "identity" || s == "linear") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw Error(ErrorCode::BadConfig, "unknown activation '" + s + "'");
}

LossKind parse_loss(const std::string& s) {
  if (s == "squared" || s == "squared_error" || s == "mse") return LossKind::SquaredError;
  if (s == "cross_entropy" || s == "ce") return LossKind::CrossEntropy;
  throw Error(ErrorCode::BadConfig, "unknown loss '" + s + "'");
}

LayerSpec LayerSpec::dense(Index in, Index out, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.activation = act;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::convolution(const ConvGeometry& geometry, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.activation = act;
  s.conv = geometry;
  return s;
}

Index LayerSpec::rows() const { return kind == LayerKind::Dense ? out_features : conv.out_channels; }

Index LayerSpec::cols() const {
  return (kind == LayerKind::Dense ? in_features : conv.patch_size()) + 1;
}

Index LayerSpec::locations() const { return kind == LayerKind::Dense ? 1 : conv.locations(); }

Index LayerSpec::input_size() const {
  return kind == LayerKind::Dense ? in_features
                                  : conv.in_channels * conv.in_height * conv.in_width;
}

ParamLayout ParamLayout::from_layers(const std::vector<LayerSpec>& layers) {
  ParamLayout l;
  for (const auto& spec : layers) {
    l.offsets.push_back(l.total);
    l.sizes.push_back(spec.param_count());
    l.rows.push_back(spec.rows());
    l.cols.push_back(spec.cols());
    l.total += spec.param_count();
  }
  return l;
}

Matrix ParamLayout::mat(const Vector& v, std::size_t i) const {
  return Eigen::Map<const Matrix>(v.data() + offsets[i], rows[i], cols[i]);
}

Network::Network(std::vector<LayerSpec> layers, LossKind loss)
    : m_layers(std::move(layers)), m_loss(loss) {
  require(!m_layers.empty(), ErrorCode::DimensionMismatch, "network has no layers");
  for (std::size_t i = 0; i < m_layers.size(); ++i) {
    const auto& spec = m_layers[i];
    if (spec.kind == LayerKind::Conv) {
      const auto& c = spec.conv;
      require(c.stride >= 1 && c.padding >= 0 && c.kernel_height >= 1 && c.kernel_width >= 1 &&
                  c.in_height + 2 * c.padding >= c.kernel_height &&
                  c.in_width + 2 * c.padding >= c.kernel_width,
              ErrorCode::DimensionMismatch, "layer " + std::to_string(i) + ": invalid conv geometry");
    }
    require(spec.rows() > 0 && spec.input_size() > 0, ErrorCode::DimensionMismatch,
            "layer " + std::to_string(i) + ": empty layer");
    if (i > 0) {
      require(spec.input_size() == m_layers[i - 1].output_size(), ErrorCode::DimensionMismatch,
              "layer " + std::to_string(i) + " expects " + std::to_string(spec.input_size()) +
                  " inputs but layer " + std::to_string(i - 1) + " produces " +
                  std::to_string(m_layers[i - 1].output_size()));
    }
  }
  m_layout = ParamLayout::from_layers(m_layers);
  m_theta = Vector::Zero(m_layout.total);
}

Eigen::Map<const Matrix> Network::weight(std::size_t i) const {
  return {m_theta.data() + m_layout.offsets[i], m_layout.rows[i], m_layout.cols[i]};
}

Eigen::Map<Matrix> Network::weight(std::size_t i) {
  return {m_theta.data() + m_layout.offsets[i], m_layout.rows[i], m_layout.cols[i]};
}

void Network::initialize(std::uint64_t seed) {
  auto engine = make_engine(seed, Stream::Init);
  for (std::size_t i = 0; i < m_layers.size(); ++i) {
    auto w = weight(i);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(w.cols() - 1));
    std::normal_distribution<double> normal(0.0, stddev);
    for (Index c = 0; c + 1 < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = normal(engine);
    w.col(w.cols() - 1).setZero();
  }
}

namespace {

void activate(Activation act, const Matrix& s, Matrix& out) {
  switch (act) {
    case Activation::Identity: out = s; break;
    case Activation::Tanh: out = s.array().tanh(); break;
    case Activation::Relu: out = s.array().max(0.0); break;
    case Activation::Sigmoid: out = (1.0 + (-s.array()).exp()).inverse(); break;
  }
}

Matrix derivative(Activation act, const Matrix& s) {
  switch (act) {
    case Activation::Identity: return Matrix::Ones(s.rows(), s.cols());
    case Activation::Tanh: return 1.0 - s.array().tanh().square();
    case Activation::Relu: return (s.array() > 0.0).cast<double>();
    case Activation::Sigmoid: {
      Eigen::ArrayXXd sig = (1.0 + (-s.array()).exp()).inverse();
      return sig * (1.0 - sig);
    }
  }
  return Matrix::Ones(s.rows(), s.cols());
}

Vector log_softmax(const Eigen::Ref<const Vector>& z) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

}  // namespace

Matrix im2col(const ConvGeometry& g, const Matrix& input) {
  const Index batch = input.cols();
  const Index oh = g.out_height(), ow = g.out_width(), t_count = oh * ow;
  require(input.rows() == g.in_channels * g.in_height * g.in_width, ErrorCode::DimensionMismatch,
          "im2col: input size mismatch");
  Matrix patches = Matrix::Zero(g.patch_size() + 1, t_count * batch);
  for (Index b = 0; b < batch; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index col = b * t_count + oy * ow + ox;
        for (Index ky = 0; ky < g.kernel_height; ++ky) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (Index kx = 0; kx < g.kernel_width; ++kx) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            const Index src = g.in_channels * (iy * g.in_width + ix);
            const Index dst = g.in_channels * (kx + g.kernel_width * ky);
            for (Index c = 0; c < g.in_channels; ++c) patches(dst + c, col) = input(src + c, b);
          }
        }
        patches(g.patch_size(), col) = 1.0;
      }
    }
  }
  return patches;
}

void col2im_add(const ConvGeometry& g, const Matrix& patch_grad, Matrix& input_grad) {
  const Index oh = g.out_height(), ow = g.out_width(), t_count = oh * ow;
  const Index batch = input_grad.cols();
  require(patch_grad.rows() >= g.patch_size() && patch_grad.cols() == t_count * batch,
          ErrorCode::DimensionMismatch, "col2im: shape mismatch");
  for (Index b = 0; b < batch; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index col = b * t_count + oy * ow + ox;
        for (Index ky = 0; ky < g.kernel_height; ++ky) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (Index kx = 0; kx < g.kernel_width; ++kx) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            const Index dst = g.in_channels * (iy * g.in_width + ix);
            const Index src = g.in_channels * (kx + g.kernel_width * ky);
            for (Index c = 0; c < g.in_channels; ++c)
              input_grad(dst + c, b) += patch_grad(src + c, col);
          }
        }
      }
    }
  }
}

BatchCache forward(const Network& net, const Matrix& inputs) {
  require(inputs.rows() == net.input_size(), ErrorCode::DimensionMismatch,
          "forward: inputs have " + std::to_string(inputs.rows()) + " rows, network expects " +
              std::to_string(net.input_size()));
  const Index batch = inputs.cols();
  BatchCache cache;
  cache.batch_size = batch;
  cache.loss = net.loss();
  cache.layers.resize(net.layers().size());

  Matrix a = inputs;
  Matrix act;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& spec = net.layers()[i];
    auto& lc = cache.layers[i];
    lc.locations = spec.locations();
    if (spec.kind == LayerKind::Dense) {
      lc.abar.resize(a.rows() + 1, batch);
      lc.abar.topRows(a.rows()) = a;
      lc.abar.row(a.rows()).setOnes();
    } else {
      lc.abar = im2col(spec.conv, a);
    }
    lc.s = net.weight(i) * lc.abar;
    activate(spec.activation, lc.s, act);
    // rows x (T*B) and (rows*T) x B share the same column-major storage.
    a = Eigen::Map<const Matrix>(act.data(), spec.output_size(), batch);
  }
  cache.outputs = std::move(a);
  return cache;
}

Vector sample_losses(LossKind loss, const Matrix& outputs, const Matrix& targets) {
  require(outputs.rows() == targets.rows() && outputs.cols() == targets.cols(),
          ErrorCode::DimensionMismatch, "loss: outputs/targets shape mismatch");
  Vector out(outputs.cols());
  for (Index b = 0; b < outputs.cols(); ++b) {
    if (loss == LossKind::SquaredError) {
      out(b) = 0.5 * (outputs.col(b) - targets.col(b)).squaredNorm();
    } else {
      out(b) = -targets.col(b).dot(log_softmax(outputs.col(b)));
    }
  }
  return out;
}

double mean_loss(LossKind loss, const Matrix& outputs, const Matrix& targets) {
  Vector l = sample_losses(loss, outputs, targets);
  return l.size() == 0 ? 0.0 : l.sum() / static_cast<double>(l.size());
}

Matrix output_gradient(LossKind loss, const Matrix& outputs, const Matrix& targets) {
  require(outputs.rows() == targets.rows() && outputs.cols() == targets.cols(),
          ErrorCode::DimensionMismatch, "output_gradient: shape mismatch");
  if (loss == LossKind::SquaredError) return outputs - targets;
  Matrix d(outputs.rows(), outputs.cols());
  for (Index b = 0; b < outputs.cols(); ++b) {
    Vector p = log_softmax(outputs.col(b)).array().exp();
    d.col(b) = p * targets.col(b).sum() - targets.col(b);
  }
  return d;
}

Vector backward(const Network& net, BatchCache& cache, const Matrix& targets) {
  require(targets.cols() == cache.batch_size && targets.rows() == cache.outputs.rows(),
          ErrorCode::DimensionMismatch, "backward: targets do not match the cached batch");
  return backward_from_output_grad(net, cache, output_gradient(cache.loss, cache.outputs, targets));
}

Vector backward_from_output_grad(const Network& net, BatchCache& cache, const Matrix& output_grad) {
  const auto& layers = net.layers();
  require(cache.layers.size() == layers.size(), ErrorCode::DimensionMismatch,
          "backward: cache does not belong to this network");
  require(output_grad.rows() == net.output_size() && output_grad.cols() == cache.batch_size,
          ErrorCode::DimensionMismatch, "backward: output gradient shape mismatch");
  const Index batch = cache.batch_size;

  Matrix da = output_grad;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& spec = layers[k];
    auto& lc = cache.layers[k];
    Eigen::Map<const Matrix> dmat(da.data(), spec.rows(), lc.locations * batch);
    lc.g = dmat.cwiseProduct(derivative(spec.activation, lc.s));
    if (k == 0) break;
    auto w = net.weight(k);
    // The bias column of W (last row of W^T) does not propagate.
    Matrix dpatch = w.leftCols(w.cols() - 1).transpose() * lc.g;
    if (spec.kind == LayerKind::Dense) {
      da = std::move(dpatch);
    } else {
      da = Matrix::Zero(spec.input_size(), batch);
      col2im_add(spec.conv, dpatch, da);
    }
  }
  return PerSampleGrad(cache, net.layout()).mean();
}

Matrix sample_targets(const BatchCache& cache, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  const Matrix& z = cache.outputs;
  Matrix y = Matrix::Zero(z.rows(), z.cols());
  if (cache.loss == LossKind::SquaredError) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index b = 0; b < z.cols(); ++b)
      for (Index r = 0; r < z.rows(); ++r) y(r, b) = z(r, b) + normal(engine);
    return y;
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (Index b = 0; b < z.cols(); ++b) {
    Vector p = log_softmax(z.col(b)).array().exp();
    const double u = uniform(engine);
    double cumulative = 0.0;
    Index chosen = z.rows() - 1;
    for (Index k = 0; k < z.rows(); ++k) {
      cumulative += p(k);
      if (u < cumulative) {
        chosen = k;
        break;
      }
    }
    y(chosen, b) = 1.0;
  }
  return y;
}

BatchCache expected_fisher_cache(const Network& net, const BatchCache& fwd) {
  const Index batch = fwd.batch_size;
  const Index k_out = fwd.outputs.rows();
  const Index expanded = batch * k_out;

  BatchCache out;
  out.batch_size = expanded;
  out.loss = fwd.loss;
  out.layers.resize(fwd.layers.size());
  out.outputs.resize(k_out, expanded);
  for (std::size_t i = 0; i < fwd.layers.size(); ++i) {
    const auto& src = fwd.layers[i];
    auto& dst = out.layers[i];
    const Index t_count = src.locations;
    dst.locations = t_count;
    dst.abar.resize(src.abar.rows(), t_count * expanded);
    dst.s.resize(src.s.rows(), t_count * expanded);
    for (Index b = 0; b < batch; ++b) {
      for (Index k = 0; k < k_out; ++k) {
        const Index col = (b * k_out + k) * t_count;
        dst.abar.middleCols(col, t_count) = src.abar.middleCols(b * t_count, t_count);
        dst.s.middleCols(col, t_count) = src.s.middleCols(b * t_count, t_count);
      }
    }
  }

  Matrix da = Matrix::Zero(k_out, expanded);
  const double kd = static_cast<double>(k_out);
  for (Index b = 0; b < batch; ++b) {
    out.outputs.middleCols(b * k_out, k_out) = fwd.outputs.col(b).replicate(1, k_out);
    if (fwd.loss == LossKind::SquaredError) {
      for (Index k = 0; k < k_out; ++k) da(k, b * k_out + k) = std::sqrt(kd);
    } else {
      Vector p = log_softmax(fwd.outputs.col(b)).array().exp();
      for (Index k = 0; k < k_out; ++k) {
        Vector col = p;
        col(k) -= 1.0;
        da.col(b * k_out + k) = std::sqrt(kd * p(k)) * col;
      }
    }
  }
  backward_from_output_grad(net, out, da);
  return out;
}

Matrix PerSampleGrad::layer(std::size_t i, Index b) const {
  const auto& lc = m_cache->layers.at(i);
  const Index t = lc.locations;
  return lc.g.middleCols(b * t, t) * lc.abar.middleCols(b * t, t).transpose();
}

Vector PerSampleGrad::sample(Index b) const {
  Vector out(m_layout->total);
  for (std::size_t i = 0; i < m_layout->layers(); ++i) {
    Matrix dw = layer(i, b);
    out.segment(m_layout->offsets[i], m_layout->sizes[i]) = linalg::vec(dw);
  }
  return out;
}

Matrix PerSampleGrad::jacobian() const {
  Matrix j(m_layout->total, m_cache->batch_size);
  for (Index b = 0; b < m_cache->batch_size; ++b) j.col(b) = sample(b);
  return j;
}

Vector PerSampleGrad::mean() const {
  const Index batch = m_cache->batch_size;
  require(batch > 0, ErrorCode::EmptyBatch, "mean gradient of an empty batch");
  Vector acc = Vector::Zero(m_layout->total);
  for (Index b = 0; b < batch; ++b) acc += sample(b);
  return acc / static_cast<double>(batch);
}

}  // namespace kfac2l
