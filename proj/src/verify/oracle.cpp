#include "kfac2l/verify/oracle.hpp"

#include <cmath>

#include "kfac2l/rng.hpp"

namespace kfac2l::verify {

namespace {

Index pick(std::mt19937_64& engine, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(engine);
}

Activation pick_activation(std::mt19937_64& engine, bool smooth_only) {
  static constexpr Activation smooth[] = {Activation::Tanh, Activation::Sigmoid};
  static constexpr Activation all[] = {Activation::Tanh, Activation::Sigmoid, Activation::Relu,
                                       Activation::Identity};
  return smooth_only ? smooth[pick(engine, 0, 1)] : all[pick(engine, 0, 3)];
}

std::vector<LayerSpec> random_layers(std::mt19937_64& engine, const RandomNetOptions& o) {
  std::vector<LayerSpec> layers;
  Index size = 0;
  if (o.allow_conv && pick(engine, 0, 1) == 1) {
    ConvGeometry g;
    g.in_channels = pick(engine, 1, 2);
    g.in_height = pick(engine, 3, 6);
    g.in_width = pick(engine, 3, 6);
    const Index convs = pick(engine, 1, 2);
    for (Index c = 0; c < convs; ++c) {
      g.out_channels = pick(engine, 1, 4);
      g.padding = pick(engine, 0, 1);
      g.kernel_height = pick(engine, 1, std::min<Index>(3, g.in_height + 2 * g.padding));
      g.kernel_width = pick(engine, 1, std::min<Index>(3, g.in_width + 2 * g.padding));
      g.stride = pick(engine, 1, 2);
      layers.push_back(LayerSpec::convolution(g, pick_activation(engine, o.smooth_only)));
      const ConvGeometry next{g.out_channels, g.out_height(), g.out_width(), 1, 1, 1, 1, 0};
      g = next;
    }
    size = g.in_channels * g.in_height * g.in_width;
  } else {
    size = pick(engine, 2, 8);
    const Index hidden = pick(engine, 1, 3);
    for (Index h = 0; h < hidden; ++h) {
      const Index out = pick(engine, 2, 8);
      layers.push_back(LayerSpec::dense(size, out, pick_activation(engine, o.smooth_only)));
      size = out;
    }
  }
  layers.push_back(LayerSpec::dense(size, pick(engine, 2, 4), pick_activation(engine, o.smooth_only)));
  return layers;
}

}  // namespace

Instance random_instance(std::mt19937_64& engine, const RandomNetOptions& o) {
  for (;;) {
    auto layers = random_layers(engine, o);
    const LossKind loss = pick(engine, 0, 1) ? LossKind::CrossEntropy : LossKind::SquaredError;
    Network net(layers, loss);
    if (net.param_count() > o.max_params) continue;

    net.initialize(engine());
    std::normal_distribution<double> normal;
    const Index batch = pick(engine, 2, 6);
    Matrix inputs(net.input_size(), batch);
    for (Index j = 0; j < batch; ++j)
      for (Index i = 0; i < inputs.rows(); ++i) inputs(i, j) = normal(engine);
    Matrix targets = Matrix::Zero(net.output_size(), batch);
    for (Index j = 0; j < batch; ++j) {
      if (loss == LossKind::CrossEntropy) {
        targets(pick(engine, 0, net.output_size() - 1), j) = 1.0;
      } else {
        for (Index i = 0; i < targets.rows(); ++i) targets(i, j) = normal(engine);
      }
    }
    const double lambda = std::exp(std::uniform_real_distribution<double>(
        std::log(o.min_lambda), std::log(o.max_lambda))(engine));
    BatchCache cache = forward(net, inputs);
    Matrix sampled = sample_targets(cache, engine());
    return {std::move(net), std::move(inputs), std::move(targets), std::move(sampled), lambda};
  }
}

BatchCache sampled_cache(const Instance& in) {
  BatchCache cache = forward(in.net, in.inputs);
  backward(in.net, cache, in.sampled);
  return cache;
}

Matrix explicit_jacobian(const Network& net, const Matrix& inputs, const Matrix& targets) {
  Matrix j(net.param_count(), inputs.cols());
  for (Index b = 0; b < inputs.cols(); ++b) {
    BatchCache single = forward(net, inputs.col(b));
    j.col(b) = backward(net, single, targets.col(b));
  }
  return j;
}

Matrix explicit_fisher(const Matrix& jacobian, double lambda) {
  Matrix f = jacobian * jacobian.transpose() / static_cast<double>(jacobian.cols());
  f.diagonal().array() += lambda;
  return f;
}

Matrix explicit_kfac_block(const BatchCache& cache, std::size_t layer, double lambda) {
  const LayerCache& lc = cache.layers[layer];
  const double batch = static_cast<double>(cache.batch_size);
  const Matrix a = lc.abar * lc.abar.transpose() / batch;
  const Matrix g = lc.g * lc.g.transpose() / (batch * static_cast<double>(lc.locations));
  const double ta = a.trace() / static_cast<double>(a.rows());
  const double tg = g.trace() / static_cast<double>(g.rows());
  const double pi = tg > 0.0 && ta > 0.0 ? std::sqrt(ta / tg) : 1.0;
  const Matrix da = a + pi * std::sqrt(lambda) * Matrix::Identity(a.rows(), a.cols());
  const Matrix dg = g + std::sqrt(lambda) / pi * Matrix::Identity(g.rows(), g.cols());
  // (A kron G) vec(X) = vec(G X A^T) for the column-major vec used by the library.
  Matrix k(da.rows() * dg.rows(), da.cols() * dg.cols());
  for (Index i = 0; i < da.rows(); ++i)
    for (Index j = 0; j < da.cols(); ++j) k.block(i * dg.rows(), j * dg.cols(), dg.rows(), dg.cols()) = da(i, j) * dg;
  return k;
}

Matrix explicit_kfac_inverse(const BatchCache& cache, const ParamLayout& layout, double lambda) {
  Matrix inv = Matrix::Zero(layout.total, layout.total);
  for (std::size_t i = 0; i < layout.layers(); ++i) {
    const Matrix block = explicit_kfac_block(cache, i, lambda);
    inv.block(layout.offsets[i], layout.offsets[i], layout.sizes[i], layout.sizes[i]) =
        block.partialPivLu().inverse();
  }
  return inv;
}

Matrix explicit_prolongation(const CoarseSpace& space, const ParamLayout& layout) {
  Index m = 0;
  for (const auto& b : space.blocks) m += b.cols();
  Matrix r0t = Matrix::Zero(layout.total, m);
  Index col = 0;
  for (std::size_t i = 0; i < space.blocks.size(); ++i) {
    r0t.block(layout.offsets[i], col, layout.sizes[i], space.blocks[i].cols()) = space.blocks[i];
    col += space.blocks[i].cols();
  }
  return r0t;
}

Vector fd_gradient(Network net, const Matrix& inputs, const Matrix& targets, double h) {
  Vector grad(net.param_count());
  for (Index k = 0; k < net.param_count(); ++k) {
    const double saved = net.theta()(k);
    net.theta()(k) = saved + h;
    const double up = mean_loss(net.loss(), forward(net, inputs).outputs, targets);
    net.theta()(k) = saved - h;
    const double down = mean_loss(net.loss(), forward(net, inputs).outputs, targets);
    net.theta()(k) = saved;
    grad(k) = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace kfac2l::verify
