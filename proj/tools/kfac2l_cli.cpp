#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "kfac2l/experiment.hpp"
#include "kfac2l/plot.hpp"
#include "kfac2l/verify/checks.hpp"

using namespace kfac2l;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitBadConfig = 2;

int report(const ExperimentResult& result) {
  for (const auto& run : result.runs) {
    std::printf("%-40s %-14s best %.6g  final %.6g  alpha %.0e  lambda %.0e  %s\n", run.run_id.c_str(),
                run.no_viable ? "no-viable" : to_string(run.record.status), run.record.best_loss(),
                run.record.final_loss(), run.config.learning_rate, run.config.damping,
                run.csv_path.c_str());
    if (!run.ok() && !run.record.message.empty()) std::fprintf(stderr, "  %s\n", run.record.message.c_str());
  }
  return result.ok() ? kExitOk : kExitRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level KFAC training harness"};
  app.require_subcommand(1);

  std::string config_path;
  RunOptions options;
  std::uint64_t seed = 0;
  int epochs = -1;
  bool full_grid = false;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config file")->required();
    cmd->add_option("--seed", seed, "root seed override");
    cmd->add_option("--epochs", epochs, "epoch budget override");
    cmd->add_option("--device-threads", options.device_threads, "concurrent runs")->check(CLI::PositiveNumber);
  };
  CLI::App* run = app.add_subcommand("run", "train every method listed in the config");
  add_run_flags(run);
  CLI::App* grid = app.add_subcommand("grid", "grid-search alpha and lambda, then train");
  add_run_flags(grid);
  grid->add_flag("--full", full_grid, "use the full 1e-4..1e4 grid on both axes");

  std::vector<std::string> csvs;
  std::string out_svg;
  bool gap_plot = false;
  CLI::App* plot = app.add_subcommand("plot", "render run logs to SVG");
  plot->add_option("csv", csvs, "run log CSV files")->required();
  plot->add_option("-o,--output", out_svg, "output SVG path")->required();
  plot->add_flag("--gap", gap_plot, "plot the gap trace instead of the loss");

  std::uint64_t selftest_seed = 1;
  CLI::App* selftest = app.add_subcommand("selftest", "run the oracle-equivalence suites");
  selftest->add_option("--seed", selftest_seed, "seed for the random networks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (*run || *grid) {
      if (run->count("--seed") || grid->count("--seed")) options.seed = seed;
      if (epochs >= 0) options.epochs = epochs;
      ExperimentConfig config = load_config(config_path);
      if (*grid) {
        options.force_grid = true;
        config.grid_full = config.grid_full || full_grid;
      }
      return report(run_experiment(config, options));
    }
    if (*plot) {
      std::vector<RunLog> logs;
      for (const auto& path : csvs) logs.push_back(read_run_log(path));
      render_plot(logs, out_svg, gap_plot ? PlotKind::Gap : PlotKind::Loss);
      return kExitOk;
    }
    if (*selftest) {
      bool ok = true;
      for (const auto& r : verify::run_oracle_suite(selftest_seed)) {
        std::printf("%s\n", verify::format(r).c_str());
        ok = ok && r.pass;
      }
      return ok ? kExitOk : kExitRunFailure;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::NoViableConfig || e.code() == ErrorCode::Diverged ? kExitRunFailure
                                                                                   : kExitBadConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRunFailure;
  }
  return kExitOk;
}
