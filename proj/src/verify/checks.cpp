#include "kfac2l/verify/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "kfac2l/rng.hpp"
#include "kfac2l/verify/oracle.hpp"

namespace kfac2l::verify {

namespace {

double rel(const Matrix& a, const Matrix& b) { return linalg::relative_error(a, b); }

/// Runs `body` on `nets` random instances and keeps the worst error.
CheckResult sweep(const std::string& name, double tolerance, std::uint64_t seed, int nets,
                  const RandomNetOptions& options, const std::function<double(Instance&)>& body) {
  const auto start = std::chrono::steady_clock::now();
  auto engine = make_engine(seed, Stream::Test, std::hash<std::string>{}(name));
  CheckResult r{name, true, 0.0, tolerance, 0, 0.0};
  for (int k = 0; k < nets; ++k) {
    Instance in = random_instance(engine, options);
    const double err = body(in);
    r.worst = std::max(r.worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
    ++r.cases;
  }
  r.pass = r.worst <= tolerance;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Vector random_vector(Index n, std::uint64_t seed) {
  auto engine = make_engine(seed, Stream::Test);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(engine);
  return v;
}

std::vector<CoarseSpace> all_spaces(const std::vector<KfacBlock>& blocks, const FisherOracle& oracle,
                                    const Vector& r) {
  const ParamLayout& layout = oracle.layout();
  std::vector<Vector> ones, segs;
  for (std::size_t i = 0; i < layout.layers(); ++i) {
    ones.push_back(Vector::Ones(layout.sizes[i]));
    Vector s = layout.segment(r, i);
    segs.push_back(s.norm() > 0 ? s : ones.back());
  }
  return {build_nicolaides(layout),
          build_spectral(blocks),
          build_krylov(blocks, ones, CoarseKind::KrylovNico),
          build_krylov(blocks, segs, CoarseKind::KrylovResidu),
          build_residuals(blocks, layout, r),
          build_taylor(blocks, oracle, r, 2)};
}

}  // namespace

CheckResult check_fisher_matvec(std::uint64_t seed, int nets) {
  return sweep("fisher_matvec vs explicit F.u", 1e-9, seed, nets, {}, [](Instance& in) {
    const BatchCache cache = sampled_cache(in);
    const FisherOracle oracle(cache, in.net.layout(), in.lambda);
    const Matrix f = explicit_fisher(explicit_jacobian(in.net, in.inputs, in.sampled), in.lambda);
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 3; ++k) {
      const Vector u = random_vector(in.net.param_count(), k + 17);
      worst = std::max(worst, rel(oracle.fisher_matvec(u), f * u));
    }
    return worst;
  });
}

CheckResult check_coarse_operator(std::uint64_t seed, int nets) {
  return sweep("coarse_operator vs R0 (F + lambda I) R0^T", 1e-9, seed, nets, {}, [](Instance& in) {
    const ParamLayout& layout = in.net.layout();
    const BatchCache cache = sampled_cache(in);
    const FisherOracle oracle(cache, layout, in.lambda);
    const Matrix f = explicit_fisher(explicit_jacobian(in.net, in.inputs, in.sampled), in.lambda);
    const auto blocks = build_blocks(cache, in.lambda);
    const Vector grad = random_vector(layout.total, 3);
    const Vector r = residual(oracle, grad, kfac_apply_inverse(blocks, layout, grad));
    double worst = 0.0;
    for (const auto& space : all_spaces(blocks, oracle, r)) {
      const Matrix r0t = explicit_prolongation(space, layout);
      worst = std::max(worst, rel(coarse_operator(oracle, space).matrix, r0t.transpose() * f * r0t));
    }
    return worst;
  });
}

CheckResult check_kfac_inverse(std::uint64_t seed, int nets) {
  return sweep("kfac_apply_inverse vs explicit Kronecker solve", 1e-8, seed, nets, {}, [](Instance& in) {
    const ParamLayout& layout = in.net.layout();
    const BatchCache cache = sampled_cache(in);
    const auto blocks = build_blocks(cache, in.lambda);
    const Vector grad = random_vector(layout.total, 5);
    Vector expected(layout.total);
    for (std::size_t i = 0; i < layout.layers(); ++i)
      layout.segment(expected, i) = explicit_kfac_block(cache, i, in.lambda).partialPivLu().solve(layout.segment(grad, i));
    return rel(kfac_apply_inverse(blocks, layout, grad), expected);
  });
}

CheckResult check_multiplicative(std::uint64_t seed, int nets) {
  RandomNetOptions options;
  options.max_params = 100;
  options.min_lambda = 1e-2;
  return sweep("multiplicative corrector identity", 1e-8, seed, nets, options, [](Instance& in) {
    const ParamLayout& layout = in.net.layout();
    const Index p = layout.total;
    const BatchCache cache = sampled_cache(in);
    const FisherOracle oracle(cache, layout, in.lambda);
    const Matrix f = explicit_fisher(explicit_jacobian(in.net, in.inputs, in.sampled), in.lambda);
    const Matrix kinv = explicit_kfac_inverse(cache, layout, in.lambda);
    const auto blocks = build_blocks(cache, in.lambda);
    std::vector<Vector> ones;
    for (std::size_t i = 0; i < layout.layers(); ++i) ones.push_back(Vector::Ones(layout.sizes[i]));

    // Only gradient-independent spaces make F2L^-1 a linear operator.
    double worst = 0.0;
    for (const auto& space : {build_nicolaides(layout), build_spectral(blocks),
                              build_krylov(blocks, ones, CoarseKind::KrylovNico)}) {
      const CoarseOperator op = coarse_operator(oracle, space);
      Matrix f2l(p, p);
      for (Index k = 0; k < p; ++k) {
        const Vector e = Vector::Unit(p, k);
        const Vector dk = kfac_apply_inverse(blocks, layout, e);
        const Vector r = residual(oracle, e, dk);
        f2l.col(k) = apply_correction(dk, space, layout, beta_star(op, space, layout, r));
      }
      const Matrix r0t = explicit_prolongation(space, layout);
      const Matrix fc = r0t.transpose() * f * r0t;
      const Matrix coarse = r0t * fc.ldlt().solve(r0t.transpose());
      const Matrix id = Matrix::Identity(p, p);
      const Matrix lhs = id - f2l * f;
      const Matrix rhs = (id - coarse * f) * (id - kinv * f);
      worst = std::max(worst, (lhs - rhs).norm());
    }
    return worst;
  });
}

CheckResult check_full_space(std::uint64_t seed, int nets) {
  RandomNetOptions options;
  options.max_params = 100;
  return sweep("full-space correction vs regularized NGD", 1e-7, seed, nets, options, [](Instance& in) {
    const ParamLayout& layout = in.net.layout();
    const BatchCache cache = sampled_cache(in);
    const FisherOracle oracle(cache, layout, in.lambda);
    const Matrix f = explicit_fisher(explicit_jacobian(in.net, in.inputs, in.sampled), in.lambda);
    const auto blocks = build_blocks(cache, in.lambda);
    const Vector grad = random_vector(layout.total, 9);
    const Vector dk = kfac_apply_inverse(blocks, layout, grad);
    const Vector r = residual(oracle, grad, dk);
    const CoarseSpace space = build_full_space(layout);
    const CoarseOperator op = coarse_operator(oracle, space);
    const Vector d2l = apply_correction(dk, space, layout, beta_star(op, space, layout, r));
    return rel(d2l, f.ldlt().solve(grad));
  });
}

CheckResult check_gradient(std::uint64_t seed, int nets) {
  RandomNetOptions options;
  options.max_params = 50;
  options.smooth_only = true;
  return sweep("backward vs central differences", 1e-6, seed, nets, options, [](Instance& in) {
    BatchCache cache = forward(in.net, in.inputs);
    const Vector g = backward(in.net, cache, in.targets);
    return rel(g, fd_gradient(in.net, in.inputs, in.targets));
  });
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
  return {check_fisher_matvec(seed), check_coarse_operator(seed), check_kfac_inverse(seed),
          check_multiplicative(seed), check_full_space(seed), check_gradient(seed)};
}

std::string format(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] %s: worst %.3e (tol %.0e) over %d nets, %.2fs",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.worst, r.tolerance, r.cases, r.seconds);
  return buf;
}

}  // namespace kfac2l::verify
