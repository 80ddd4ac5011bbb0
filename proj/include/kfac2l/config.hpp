#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kfac2l/optim.hpp"

namespace kfac2l {

/** One entry of the `layers` key.
 *    dense:<out>:<activation>
 *    conv:<channels>:<kh>x<kw>:s<stride>:p<padding>:<activation>
 *  Input sizes are inferred from the previous layer or the input shape. */
struct LayerToken {
  LayerKind kind = LayerKind::Dense;
  Index out = 0;
  Index kernel_height = 1;
  Index kernel_width = 1;
  Index stride = 1;
  Index padding = 0;
  Activation activation = Activation::Identity;

  bool operator==(const LayerToken&) const = default;
};

LayerToken parse_layer_token(const std::string& text);
std::string to_string(const LayerToken& token);

struct InputShape {
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  Index size() const { return channels * height * width; }
  bool operator==(const InputShape&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  int epochs = 100;
  Index batch_size = 32;
  LossKind loss = LossKind::SquaredError;

  /// idx | csv | synthetic-regression | synthetic-autoencoder
  std::string dataset = "synthetic-regression";
  std::string dataset_path;
  std::string labels_path;
  /// Samples to keep (idx/csv: first n, 0 keeps all; synthetic: n).
  Index dataset_size = 256;
  /// Synthetic input dimension; ignored when input_shape is set.
  Index dataset_dim = 16;
  /// One-hot class count. 0 means regression targets (synthetic) or max label + 1 (files).
  Index classes = 0;
  /// Targets are the inputs (idx/csv).
  bool autoencoder = false;
  /// Set when the first layer is a convolution.
  bool has_input_shape = false;
  InputShape input_shape;

  std::vector<LayerToken> layers;
  std::vector<Method> methods{Method::KFAC};

  double learning_rate = 1e-2;
  double damping = 1e-2;
  double weight_decay = 1e-3;
  int taylor_order = 2;
  int patience = 10;
  FisherEstimate fisher = FisherEstimate::Sampled;

  bool grid = false;
  bool grid_full = false;
  std::vector<double> grid_lr{1e-3, 1e-2, 1e-1};
  std::vector<double> grid_damping{1e-3, 1e-2, 1e-1};

  std::string output_dir = "runs";
  bool record_time = false;
  /// Also write a per-step CSV next to the per-epoch log.
  bool step_trace = false;

  bool operator==(const ExperimentConfig&) const = default;
};

/** Parses `key = value` lines. `#` starts a comment, strings may be quoted,
 *  lists are comma separated with optional brackets. Unknown keys and
 *  malformed values raise BadConfig. */
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// Structural checks that need no file access.
void validate(const ExperimentConfig& config);

/// Resolves the layer tokens against the input size or shape.
std::vector<LayerSpec> build_layers(const ExperimentConfig& config, Index input_size);

OptimizerConfig optimizer_config(const ExperimentConfig& config, Method method);

}  // namespace kfac2l
