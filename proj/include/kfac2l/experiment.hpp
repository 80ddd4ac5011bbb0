#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kfac2l/config.hpp"

namespace kfac2l {

/// Command-line overrides applied on top of the config file.
struct RunOptions {
  int device_threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool force_grid = false;
};

struct RunOutcome {
  Method method = Method::KFAC;
  std::string run_id;
  std::string csv_path;
  OptimizerConfig config;
  RunRecord record;
  /// Set when grid search found no surviving cell.
  bool no_viable = false;

  bool ok() const { return !no_viable && record.ok(); }
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;

  bool ok() const;
  /// 0 when every run completed, 1 otherwise.
  int exit_code() const;
};

/** Loads the data, resolves the layers and checks that they agree.
 *  Throws BadConfig/DimMismatch and the dataset errors. */
Problem make_problem(const ExperimentConfig& config);

std::string run_id(const ExperimentConfig& config, Method method);

/** For each method: optional grid search, then the run with the chosen
 *  (alpha, lambda). Writes <output_dir>/<run_id>.csv atomically, plus a
 *  `.failed` marker next to the partial log when the run did not complete.
 *  Methods run concurrently on up to device_threads threads. */
ExperimentResult run_experiment(ExperimentConfig config, const RunOptions& options = {});

}  // namespace kfac2l
