#include "kfac2l/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <thread>

#include "kfac2l/dataset.hpp"
#include "kfac2l/runlog.hpp"

namespace kfac2l {

bool ExperimentResult::ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.ok(); });
}

int ExperimentResult::exit_code() const { return ok() ? 0 : 1; }

Problem make_problem(const ExperimentConfig& c) {
  validate(c);
  Problem p;
  if (c.dataset.rfind("synthetic", 0) == 0) {
    p.layers = build_layers(c, c.has_input_shape ? c.input_shape.size() : c.dataset_dim);
    p.data = load_dataset(c, p.layers.back().output_size());
  } else {
    p.data = load_dataset(c, c.classes);
    p.layers = build_layers(c, p.data.inputs.rows());
  }
  if (p.data.targets.rows() != p.layers.back().output_size())
    throw Error(ErrorCode::DimMismatch, "targets have " + std::to_string(p.data.targets.rows()) +
                                            " rows, the network outputs " +
                                            std::to_string(p.layers.back().output_size()));
  if (c.batch_size > p.data.size())
    throw Error(ErrorCode::BadConfig, "batch_size " + std::to_string(c.batch_size) +
                                          " exceeds the dataset size " + std::to_string(p.data.size()));
  p.loss = c.loss;
  p.batch_size = c.batch_size;
  p.epochs = c.epochs;
  p.patience = c.patience;
  p.seed = c.seed;
  p.record_time = c.record_time;
  return p;
}

std::string run_id(const ExperimentConfig& c, Method method) {
  std::string tag = to_string(method);
  std::transform(tag.begin(), tag.end(), tag.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return c.name + "-" + tag + "-s" + std::to_string(c.seed);
}

namespace {

RunOutcome run_one(const ExperimentConfig& c, const Problem& problem, Method method, int grid_threads) {
  RunOutcome out;
  out.method = method;
  out.run_id = run_id(c, method);
  out.csv_path = (std::filesystem::path(c.output_dir) / (out.run_id + ".csv")).string();
  out.config = optimizer_config(c, method);

  if (c.grid) {
    const Grid grid = c.grid_full ? Grid::full() : Grid{c.grid_lr, c.grid_damping};
    try {
      GridResult g = grid_search(problem, out.config, grid, grid_threads);
      out.config = g.best;
      out.record = std::move(g.record);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoViableConfig) throw;
      out.no_viable = true;
      out.record.config = out.config;
      out.record.status = RunStatus::Failed;
      out.record.message = e.what();
    }
  } else {
    out.record = train(problem, out.config);
  }

  write_atomic(out.csv_path, format_run_log(epoch_log(out.run_id, method, out.record)));
  if (c.step_trace) {
    const auto trace = (std::filesystem::path(c.output_dir) / (out.run_id + ".steps.csv")).string();
    write_atomic(trace, format_run_log(step_log(out.run_id, method, out.record)));
  }
  const std::string marker = failed_marker_path(out.csv_path);
  if (out.ok()) {
    std::filesystem::remove(marker);
  } else {
    write_atomic(marker, std::string(to_string(out.record.status)) + ": " + out.record.message + "\n");
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(ExperimentConfig c, const RunOptions& options) {
  if (options.seed) c.seed = *options.seed;
  if (options.epochs) c.epochs = *options.epochs;
  if (options.force_grid) c.grid = true;
  const Problem problem = make_problem(c);

  std::error_code ec;
  std::filesystem::create_directories(c.output_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + c.output_dir + "': " + ec.message());

  const int threads = std::max(1, options.device_threads);
  const int n = static_cast<int>(c.methods.size());
  const int outer = std::min(threads, n);
  const int inner = std::max(1, threads / outer);

  ExperimentResult result;
  result.runs.resize(c.methods.size());
  std::vector<std::exception_ptr> errors(c.methods.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < c.methods.size(); k = next++) {
      try {
        result.runs[k] = run_one(c, problem, c.methods[k], inner);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (outer == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < outer; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace kfac2l
