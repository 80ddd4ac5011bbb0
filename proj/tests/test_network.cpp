#include "support.hpp"

#include "kfac2l/verify/oracle.hpp"

using namespace kfac2l;
using namespace testing;

namespace {

/// d z_k / d theta by central differences, one matrix per sample (d_out x p).
std::vector<Matrix> fd_output_jacobians(Network net, const Matrix& inputs, double h = 1e-5) {
  std::vector<Matrix> jac(inputs.cols(), Matrix(net.output_size(), net.param_count()));
  for (Index k = 0; k < net.param_count(); ++k) {
    const double saved = net.theta()(k);
    net.theta()(k) = saved + h;
    const Matrix up = forward(net, inputs).outputs;
    net.theta()(k) = saved - h;
    const Matrix down = forward(net, inputs).outputs;
    net.theta()(k) = saved;
    for (Index b = 0; b < inputs.cols(); ++b) jac[b].col(k) = (up.col(b) - down.col(b)) / (2 * h);
  }
  return jac;
}

Matrix softmax(const Vector& z) {
  const Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

}  // namespace

TEST_CASE("layer shapes and parameter layout") {
  const ConvGeometry g{2, 5, 4, 3, 3, 2, 2, 1};
  const LayerSpec conv = LayerSpec::convolution(g, Activation::Relu);
  CHECK(conv.rows() == 3);
  CHECK(conv.cols() == 2 * 3 * 2 + 1);
  CHECK(g.out_height() == 3);
  CHECK(g.out_width() == 3);
  CHECK(conv.output_size() == 27);
  Network net({conv, LayerSpec::dense(27, 4, Activation::Tanh)}, LossKind::SquaredError);
  CHECK(net.layout().offsets == std::vector<Index>{0, 39});
  CHECK(net.param_count() == 39 + 4 * 28);
  CHECK(net.weight(1).rows() == 4);
  CHECK(net.weight(1).cols() == 28);
}

TEST_CASE("network rejects incompatible layers") {
  CHECK_THROWS_AS(Network({LayerSpec::dense(3, 4, Activation::Tanh), LayerSpec::dense(5, 2, Activation::Tanh)},
                          LossKind::SquaredError),
                  Error);
  CHECK_THROWS_AS(Network({}, LossKind::SquaredError), Error);
  const ConvGeometry too_big{1, 2, 2, 1, 3, 3, 1, 0};
  CHECK_THROWS_AS(Network({LayerSpec::convolution(too_big, Activation::Relu)}, LossKind::SquaredError), Error);
}

TEST_CASE("initialize: deterministic, zero bias, fan-in scaling") {
  Network a({LayerSpec::dense(50, 40, Activation::Tanh)}, LossKind::SquaredError);
  Network b = a;
  a.initialize(3);
  b.initialize(3);
  CHECK(a.theta() == b.theta());
  CHECK(a.weight(0).col(50).isZero());
  const double var = a.weight(0).leftCols(50).squaredNorm() / (40.0 * 50.0);
  CHECK(var == doctest::Approx(1.0 / 50).epsilon(0.15));
  b.initialize(4);
  CHECK(a.theta() != b.theta());
}

TEST_CASE("forward: closed-form cases") {
  auto e = engine(10);
  SUBCASE("identity dense layer") {
    Network net({LayerSpec::dense(3, 3, Activation::Identity)}, LossKind::SquaredError);
    net.weight(0).leftCols(3) = Matrix::Identity(3, 3);
    const Matrix x = random_matrix(e, 3, 5);
    CHECK(forward(net, x).outputs == x);
  }
  SUBCASE("zero weights give the activation of the bias") {
    Network net({LayerSpec::dense(3, 4, Activation::Tanh), LayerSpec::dense(4, 2, Activation::Sigmoid)},
                LossKind::SquaredError);
    net.weight(1).col(4) << 0.5, -1.0;
    const Matrix z = forward(net, random_matrix(e, 3, 2)).outputs;
    for (Index b = 0; b < 2; ++b) {
      CHECK(z(0, b) == doctest::Approx(1 / (1 + std::exp(-0.5))));
      CHECK(z(1, b) == doctest::Approx(1 / (1 + std::exp(1.0))));
    }
  }
  SUBCASE("1x1 identity filter copies the channel map") {
    const ConvGeometry g{1, 4, 3, 1, 1, 1, 1, 0};
    Network net({LayerSpec::convolution(g, Activation::Identity)}, LossKind::SquaredError);
    net.weight(0)(0, 0) = 1.0;
    const Matrix x = random_matrix(e, 12, 3);
    CHECK(forward(net, x).outputs == x);
  }
  SUBCASE("wrong input size") {
    Network net({LayerSpec::dense(3, 3, Activation::Identity)}, LossKind::SquaredError);
    CHECK_THROWS_AS(forward(net, Matrix::Zero(4, 2)), Error);
  }
}

TEST_CASE("im2col matches brute-force patch extraction") {
  auto e = engine(11);
  for (int k = 0; k < 30; ++k) {
    ConvGeometry g;
    g.in_channels = uniform(e, 1, 3);
    g.in_height = uniform(e, 2, 6);
    g.in_width = uniform(e, 2, 6);
    g.padding = uniform(e, 0, 1);
    g.kernel_height = uniform(e, 1, std::min<Index>(3, g.in_height + 2 * g.padding));
    g.kernel_width = uniform(e, 1, std::min<Index>(3, g.in_width + 2 * g.padding));
    g.stride = uniform(e, 1, 2);
    const Index batch = 2;
    const Matrix x = random_matrix(e, g.in_channels * g.in_height * g.in_width, batch);
    const Matrix cols = im2col(g, x);
    REQUIRE(cols.rows() == g.patch_size() + 1);
    REQUIRE(cols.cols() == g.locations() * batch);
    for (Index b = 0; b < batch; ++b)
      for (Index oy = 0; oy < g.out_height(); ++oy)
        for (Index ox = 0; ox < g.out_width(); ++ox) {
          const Index col = b * g.locations() + oy * g.out_width() + ox;
          for (Index ky = 0; ky < g.kernel_height; ++ky)
            for (Index kx = 0; kx < g.kernel_width; ++kx)
              for (Index c = 0; c < g.in_channels; ++c) {
                const Index y = oy * g.stride + ky - g.padding, xx = ox * g.stride + kx - g.padding;
                const bool inside = y >= 0 && y < g.in_height && xx >= 0 && xx < g.in_width;
                const double expected = inside ? x(c + g.in_channels * (y * g.in_width + xx), b) : 0.0;
                CHECK(cols(c + g.in_channels * (kx + g.kernel_width * ky), col) == expected);
              }
          CHECK(cols(g.patch_size(), col) == 1.0);
        }
  }
}

TEST_CASE("col2im_add is the adjoint of im2col") {
  auto e = engine(12);
  const ConvGeometry g{2, 5, 4, 1, 3, 2, 2, 1};
  const Matrix x = random_matrix(e, 40, 3);
  const Matrix y = random_matrix(e, g.patch_size(), g.locations() * 3);
  Matrix back = Matrix::Zero(40, 3);
  col2im_add(g, y, back);
  const double lhs = (im2col(g, x).topRows(g.patch_size()).array() * y.array()).sum();
  const double rhs = (x.array() * back.array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("1x1 stride-1 convolution equals a dense layer per location") {
  auto e = engine(13);
  const ConvGeometry g{3, 3, 4, 2, 1, 1, 1, 0};
  Network conv({LayerSpec::convolution(g, Activation::Tanh)}, LossKind::SquaredError);
  conv.initialize(5);
  conv.weight(0).col(3) << 0.3, -0.2;
  Network dense({LayerSpec::dense(3, 2, Activation::Tanh)}, LossKind::SquaredError);
  dense.theta() = conv.theta();
  const Matrix x = random_matrix(e, 36, 2);
  const Matrix z = forward(conv, x).outputs;
  for (Index b = 0; b < 2; ++b)
    for (Index t = 0; t < 12; ++t) {
      const Matrix pix = x.col(b).segment(3 * t, 3);
      CHECK(rel(z.col(b).segment(2 * t, 2), forward(dense, pix).outputs) <= 1e-15);
    }
}

TEST_CASE("cached abar rows end with exactly one") {
  auto e = engine(14);
  for (int k = 0; k < 30; ++k) {
    const auto in = verify::random_instance(e, {});
    const BatchCache cache = forward(in.net, in.inputs);
    for (const auto& lc : cache.layers) CHECK((lc.abar.row(lc.abar.rows() - 1).array() == 1.0).all());
  }
}

TEST_CASE("backward: closed forms") {
  auto e = engine(15);
  SUBCASE("linear least squares, B = 1") {
    Network net({LayerSpec::dense(3, 2, Activation::Identity)}, LossKind::SquaredError);
    net.initialize(1);
    const Matrix x = random_matrix(e, 3, 1), y = random_matrix(e, 2, 1);
    BatchCache cache = forward(net, x);
    const Vector grad = backward(net, cache, y);
    Vector abar(4);
    abar << x.col(0), 1.0;
    const Matrix expected = (cache.outputs - y) * abar.transpose();
    CHECK(rel(grad, linalg::vec(expected)) <= 1e-14);
  }
  SUBCASE("targets equal to outputs give a zero gradient") {
    for (int k = 0; k < 10; ++k) {
      auto in = verify::random_instance(e, {});
      Network net(in.net.layers(), LossKind::SquaredError);
      net.theta() = in.net.theta();
      BatchCache cache = forward(net, in.inputs);
      const Matrix targets = cache.outputs;
      CHECK(backward(net, cache, targets).isZero());
    }
  }
  SUBCASE("target batch mismatch") {
    Network net({LayerSpec::dense(3, 2, Activation::Identity)}, LossKind::SquaredError);
    BatchCache cache = forward(net, Matrix::Zero(3, 4));
    CHECK_THROWS_AS(backward(net, cache, Matrix::Zero(2, 3)), Error);
  }
}

TEST_CASE("backward matches central differences") {
  auto e = engine(16);
  SUBCASE("2-layer tanh net, p <= 30") {
    Network net({LayerSpec::dense(3, 4, Activation::Tanh), LayerSpec::dense(4, 2, Activation::Tanh)},
                LossKind::SquaredError);
    REQUIRE(net.param_count() <= 30);
    net.initialize(2);
    const Matrix x = random_matrix(e, 3, 5), y = random_matrix(e, 2, 5);
    BatchCache cache = forward(net, x);
    CHECK(rel(backward(net, cache, y), verify::fd_gradient(net, x, y)) <= 1e-6);
  }
  SUBCASE("random smooth nets, p <= 50") {
    verify::RandomNetOptions o;
    o.max_params = 50;
    o.smooth_only = true;
    for (int k = 0; k < 40; ++k) {
      auto in = verify::random_instance(e, o);
      BatchCache cache = forward(in.net, in.inputs);
      CHECK(rel(backward(in.net, cache, in.targets), verify::fd_gradient(in.net, in.inputs, in.targets)) <= 1e-6);
    }
  }
}

TEST_CASE("per-sample gradients average to the mean gradient bit for bit") {
  auto e = engine(17);
  for (int k = 0; k < 20; ++k) {
    auto in = verify::random_instance(e, {});
    BatchCache cache = forward(in.net, in.inputs);
    const Vector mean = backward(in.net, cache, in.targets);
    const PerSampleGrad psg(cache, in.net.layout());
    Vector acc = Vector::Zero(mean.size());
    for (Index b = 0; b < cache.batch_size; ++b) acc += psg.sample(b);
    CHECK((acc / static_cast<double>(cache.batch_size) - mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK(rel(psg.jacobian(), verify::explicit_jacobian(in.net, in.inputs, in.targets)) <= 1e-13);
  }
}

TEST_CASE("sample_targets") {
  auto e = engine(18);
  SUBCASE("deterministic given the seed") {
    Network net({LayerSpec::dense(3, 2, Activation::Identity)}, LossKind::SquaredError);
    net.initialize(1);
    const BatchCache cache = forward(net, random_matrix(e, 3, 6));
    CHECK(sample_targets(cache, 9) == sample_targets(cache, 9));
    CHECK(sample_targets(cache, 9) != sample_targets(cache, 10));
  }
  SUBCASE("Gaussian noise has unit variance around the outputs") {
    Network net({LayerSpec::dense(2, 2, Activation::Identity)}, LossKind::SquaredError);
    net.initialize(1);
    const BatchCache cache = forward(net, random_matrix(e, 2, 5000));
    const Matrix noise = sample_targets(cache, 4) - cache.outputs;
    CHECK(std::abs(noise.mean()) < 0.03);
    CHECK(noise.squaredNorm() / noise.size() == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("single logit always selects that class") {
    Network net({LayerSpec::dense(2, 1, Activation::Identity)}, LossKind::CrossEntropy);
    net.initialize(1);
    const BatchCache cache = forward(net, random_matrix(e, 2, 50));
    CHECK((sample_targets(cache, 1).array() == 1.0).all());
  }
  SUBCASE("logits (1000, 0, 0) pick class 0 with frequency 1") {
    Network net({LayerSpec::dense(1, 3, Activation::Identity)}, LossKind::CrossEntropy);
    net.weight(0).col(1) << 1000, 0, 0;
    const BatchCache cache = forward(net, Matrix::Zero(1, 10000));
    const Matrix y = sample_targets(cache, 5);
    CHECK(y.row(0).sum() == 10000.0);
    CHECK(y.colwise().sum().isOnes());
  }
  SUBCASE("categorical frequencies follow softmax") {
    Network net({LayerSpec::dense(1, 3, Activation::Identity)}, LossKind::CrossEntropy);
    net.weight(0).col(1) << 0.0, 1.0, -1.0;
    const BatchCache cache = forward(net, Matrix::Zero(1, 20000));
    const Vector freq = sample_targets(cache, 6).rowwise().sum() / 20000.0;
    const Vector p = softmax(Vector(net.weight(0).col(1)));
    CHECK((freq - p).cwiseAbs().maxCoeff() < 0.015);
  }
}

TEST_CASE("expected_fisher_cache reproduces the Gauss-Newton form of the Fisher") {
  auto e = engine(19);
  for (int k = 0; k < 12; ++k) {
    verify::RandomNetOptions o;
    o.max_params = 80;
    o.smooth_only = true;
    auto in = verify::random_instance(e, o);
    const BatchCache fwd = forward(in.net, in.inputs);
    const BatchCache ex = expected_fisher_cache(in.net, fwd);
    CHECK(ex.batch_size == in.inputs.cols() * in.net.output_size());
    const Matrix j = PerSampleGrad(ex, in.net.layout()).jacobian();
    const Matrix f = j * j.transpose() / static_cast<double>(ex.batch_size);

    const auto jz = fd_output_jacobians(in.net, in.inputs);
    Matrix expected = Matrix::Zero(in.net.param_count(), in.net.param_count());
    for (Index b = 0; b < in.inputs.cols(); ++b) {
      Matrix h = Matrix::Identity(in.net.output_size(), in.net.output_size());
      if (in.net.loss() == LossKind::CrossEntropy) {
        const Vector p = softmax(Vector(fwd.outputs.col(b)));
        h = Matrix(p.asDiagonal()) - p * p.transpose();
      }
      expected += jz[b].transpose() * h * jz[b];
    }
    expected /= static_cast<double>(in.inputs.cols());
    CHECK(rel(f, expected) <= 1e-7);
  }
}

TEST_CASE("mean loss values") {
  Matrix z(2, 1), y(2, 1);
  z << 1.0, 3.0;
  y << 0.0, 1.0;
  CHECK(mean_loss(LossKind::SquaredError, z, y) == doctest::Approx(0.5 * (1 + 4)));
  Matrix onehot(2, 1);
  onehot << 0.0, 1.0;
  CHECK(mean_loss(LossKind::CrossEntropy, z, onehot) == doctest::Approx(std::log(1 + std::exp(-2.0))));
}
