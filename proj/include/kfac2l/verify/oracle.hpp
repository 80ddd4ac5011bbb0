#pragma once

#include <random>

#include "kfac2l/twolevel.hpp"

// Explicit-matrix reference implementations. They avoid the matrix-free
// and Kronecker shortcuts of the library so the two can be compared.
namespace kfac2l::verify {

struct RandomNetOptions {
  Index max_params = 200;
  bool allow_conv = true;
  /// tanh/sigmoid only (finite-difference checks need smooth activations).
  bool smooth_only = false;
  double min_lambda = 1e-3;
  double max_lambda = 1.0;
};

struct Instance {
  Network net;
  Matrix inputs;
  Matrix targets;
  /// Targets drawn from the model's predictive distribution.
  Matrix sampled;
  double lambda = 0.0;
};

/// Mixed Dense/Conv network with random weights, batch, targets and damping.
Instance random_instance(std::mt19937_64& engine, const RandomNetOptions& options);

/// Forward pass plus backward on the sampled targets.
BatchCache sampled_cache(const Instance& instance);

/// J (p x B) assembled from one single-sample backward pass per column.
Matrix explicit_jacobian(const Network& net, const Matrix& inputs, const Matrix& targets);

/// (1/B) J J^T + lambda I.
Matrix explicit_fisher(const Matrix& jacobian, double lambda);

/// Damped (A + pi sqrt(l) I) kron (G + sqrt(l)/pi I) with factors taken from the cache.
Matrix explicit_kfac_block(const BatchCache& cache, std::size_t layer, double lambda);

/// Block-diagonal inverse of the damped KFAC blocks, each inverted by LU.
Matrix explicit_kfac_inverse(const BatchCache& cache, const ParamLayout& layout, double lambda);

/// R0^T (p x m) laid out from the per-layer blocks.
Matrix explicit_prolongation(const CoarseSpace& space, const ParamLayout& layout);

/// Central differences of the mean loss.
Vector fd_gradient(Network net, const Matrix& inputs, const Matrix& targets, double h = 1e-5);

}  // namespace kfac2l::verify
