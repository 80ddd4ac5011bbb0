#include "kfac2l/runlog.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kfac2l/dataset.hpp"

namespace kfac2l {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

std::optional<double> parse_optional(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::stod(cell);
}

}  // namespace

RunLog epoch_log(const std::string& run_id, Method method, const RunRecord& record) {
  RunLog log{run_id, to_string(method), {}};
  for (const auto& e : record.epochs)
    log.rows.push_back({run_id, log.method, e.epoch, e.step, e.loss, e.gap, e.residual_norm, e.seconds});
  return log;
}

RunLog step_log(const std::string& run_id, Method method, const RunRecord& record) {
  RunLog log{run_id, to_string(method), {}};
  for (const auto& s : record.steps)
    log.rows.push_back({run_id, log.method, s.epoch, s.step, s.loss, s.gap, s.residual_norm, s.seconds});
  return log;
}

std::string format_run_log(const RunLog& log) {
  std::string out = std::string(kRunLogHeader) + "\n";
  for (const auto& r : log.rows) {
    out += r.run_id + "," + r.method + "," + std::to_string(r.epoch) + "," + std::to_string(r.step) +
           "," + fmt(r.loss) + "," + fmt(r.gap) + "," + fmt(r.residual_norm) + "," + fmt(r.seconds) +
           "\n";
  }
  return out;
}

RunLog parse_run_log(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRunLogHeader)
    throw Error(ErrorCode::BadConfig, "run log: unexpected header");
  RunLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8) throw Error(ErrorCode::DimMismatch, "run log: row needs 8 cells");
    try {
      log.rows.push_back({cells[0], cells[1], std::stoi(cells[2]), std::stol(cells[3]),
                          std::stod(cells[4]), parse_optional(cells[5]), parse_optional(cells[6]),
                          std::stod(cells[7])});
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::BadConfig, "run log: malformed row '" + line + "'");
    }
  }
  if (!log.rows.empty()) {
    log.run_id = log.rows.front().run_id;
    log.method = log.rows.front().method;
  }
  return log;
}

RunLog read_run_log(const std::string& path) {
  const auto bytes = read_file(path);
  RunLog log = parse_run_log(std::string(bytes.begin(), bytes.end()));
  if (log.run_id.empty()) log.run_id = log.method = std::filesystem::path(path).stem().string();
  return log;
}

void write_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp + "'");
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename '" + tmp + "': " + ec.message());
}

std::string failed_marker_path(const std::string& path) { return path + ".failed"; }

}  // namespace kfac2l
