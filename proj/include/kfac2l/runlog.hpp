#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kfac2l/optim.hpp"

namespace kfac2l {

inline constexpr const char* kRunLogHeader = "run_id,method,epoch,step,loss,gap,residual_norm,seconds";

struct RunLogRow {
  std::string run_id;
  std::string method;
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  std::optional<double> gap;
  std::optional<double> residual_norm;
  double seconds = 0.0;
};

struct RunLog {
  std::string run_id;
  std::string method;
  std::vector<RunLogRow> rows;
};

/// One row per completed epoch; empty gap/residual cells for one-level methods.
RunLog epoch_log(const std::string& run_id, Method method, const RunRecord& record);
/// One row per optimizer step.
RunLog step_log(const std::string& run_id, Method method, const RunRecord& record);

/// Header plus rows, floats with 17 significant digits.
std::string format_run_log(const RunLog& log);
RunLog parse_run_log(const std::string& text);
RunLog read_run_log(const std::string& path);

/// Writes to `path.tmp` then renames over `path`.
void write_atomic(const std::string& path, const std::string& contents);
/// `path.failed` holds the failure message next to the partial log.
std::string failed_marker_path(const std::string& path);

}  // namespace kfac2l
