#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kfac2l/twolevel.hpp"

namespace kfac2l {

enum class Method {
  SGD,
  SGDMomentum,
  Adam,
  KFAC,
  ExactNGD,
  NICO,
  SPECTRAL,
  RESIDU,
  KRY_NICO,
  KRY_RESIDU,
  PREVIOUS,
  TAYLOR,
};

const char* to_string(Method m);
Method parse_method(const std::string& s);
/// KFAC plus a coarse correction (NICO ... TAYLOR, PREVIOUS).
bool is_two_level(Method m);
/// Methods whose lambda takes part in grid search.
bool uses_damping(Method m);

/** How the Fisher/KFAC statistics are estimated: one target drawn from the
 *  predictive distribution per input, or the exact expectation over it. */
enum class FisherEstimate { Sampled, Expected };

struct OptimizerConfig {
  Method method = Method::KFAC;
  double learning_rate = 1e-2;
  double damping = 1e-2;
  double weight_decay = 1e-3;
  int taylor_order = 2;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  FisherEstimate fisher = FisherEstimate::Sampled;
};

struct Batch {
  Matrix inputs;
  Matrix targets;
};

/** Everything one natural-gradient step computes before touching theta. */
struct Direction {
  double loss = 0.0;
  /// Mini-batch gradient with true targets plus weight_decay * theta.
  Vector gradient;
  Vector delta_kfac;
  /// Negative increment: delta_2L, delta_KFAC, or the exact F.^-1 gradient.
  Vector delta;
  std::optional<double> gap;
  std::optional<double> residual_norm;
  Index coarse_width = 0;
};

/** Steps 1-4 of the two-level loop for KFAC-like methods and ExactNGD.
 *  The sampled-target cache is shared by F., the KFAC factors and the
 *  coarse space; sample_seed fixes the target draw. */
Direction natural_direction(const Network& net, const Batch& batch, const OptimizerConfig& config,
                            std::uint64_t sample_seed);

struct StepDiagnostics {
  double loss = 0.0;
  std::optional<double> gap;
  std::optional<double> residual_norm;
};

/// theta <- theta - alpha delta. Throws Diverged on a non-finite loss.
StepDiagnostics step_kfac2l(Network& net, const Batch& batch, const OptimizerConfig& config,
                            std::uint64_t sample_seed);

struct FirstOrderState {
  Vector velocity;  // momentum buffer or Adam first moment
  Vector second;    // Adam second moment
  long steps = 0;
};

StepDiagnostics step_sgd(Network& net, const Batch& batch, const OptimizerConfig& config,
                         FirstOrderState& state);
StepDiagnostics step_adam(Network& net, const Batch& batch, const OptimizerConfig& config,
                          FirstOrderState& state);

/// Dispatches on config.method and carries the first-order state.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : m_config(config) {}

  const OptimizerConfig& config() const { return m_config; }
  StepDiagnostics step(Network& net, const Batch& batch, long step_index);

 private:
  OptimizerConfig m_config;
  FirstOrderState m_state;
};

enum class StopDecision { Continue, Stop };

/// Stop once the running best has not strictly decreased for `patience` epochs.
StopDecision early_stopping(const std::vector<double>& history, int patience = 10);

struct Dataset {
  Matrix inputs;   // d_x x n
  Matrix targets;  // d_y x n
  Index size() const { return inputs.cols(); }
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> gap;
  std::optional<double> residual_norm;
  double seconds = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  long step = 0;
  /// Training loss over the whole dataset after this epoch.
  double loss = 0.0;
  /// Largest gap seen during the epoch.
  std::optional<double> gap;
  std::optional<double> residual_norm;
  double seconds = 0.0;
};

enum class RunStatus { Completed, EarlyStopped, Diverged, Failed };

const char* to_string(RunStatus s);

struct RunRecord {
  OptimizerConfig config;
  double initial_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  RunStatus status = RunStatus::Completed;
  std::string message;

  bool ok() const { return status == RunStatus::Completed || status == RunStatus::EarlyStopped; }
  /// Running-best loss (initial loss included).
  double best_loss() const;
  double final_loss() const;
};

/** A training problem: architecture, data and protocol. The network is
 *  initialized from `seed` so every method starts from the same point. */
struct Problem {
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::SquaredError;
  Dataset data;
  Index batch_size = 32;
  int epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  bool record_time = false;
};

Network make_network(const Problem& problem);

/// Trains a fresh network; the optimizer seed is overridden by problem.seed.
RunRecord train(const Problem& problem, const OptimizerConfig& config);

struct Grid {
  std::vector<double> learning_rates;
  std::vector<double> dampings;

  /// {1e-4, ..., 1e4} for both axes.
  static Grid full();
};

struct GridCell {
  OptimizerConfig config;
  RunStatus status = RunStatus::Completed;
  double best_loss = 0.0;
};

struct GridResult {
  OptimizerConfig best;
  RunRecord record;
  std::vector<GridCell> cells;
};

/** Runs every (alpha, lambda) cell (alpha only for methods without damping)
 *  and keeps the lowest running-best loss; ties go to smaller alpha, then
 *  smaller lambda. Cells run on up to `threads` worker threads.
 *  Throws NoViableConfig when every cell diverges or fails. */
GridResult grid_search(const Problem& problem, const OptimizerConfig& base, const Grid& grid,
                       int threads = 1);

}  // namespace kfac2l
