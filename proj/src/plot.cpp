#include "kfac2l/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace kfac2l {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 80, kRight = 170, kTop = 30, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (epoch, y in axis units)
};

}  // namespace

std::string render_svg(const std::vector<RunLog>& logs, PlotKind kind) {
  require(!logs.empty(), ErrorCode::BadConfig, "render_plot: no run logs");
  const bool log_y = kind == PlotKind::Loss;

  std::vector<Series> series;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& log : logs) {
    Series s{log.method.empty() ? log.run_id : log.method, {}};
    for (const auto& r : log.rows) {
      double y;
      if (log_y) {
        y = std::log10(std::max(r.loss, 1e-300));
      } else {
        if (!r.gap) continue;
        y = *r.gap;
      }
      if (!std::isfinite(y)) continue;
      s.points.emplace_back(r.epoch, y);
      x0 = std::min(x0, double(r.epoch));
      x1 = std::max(x1, double(r.epoch));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    series.push_back(std::move(s));
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (log_y) {
    y0 = std::floor(y0), y1 = std::ceil(y1);
    if (y1 == y0) y1 += 1;
  } else {
    y1 = std::max(y1, 0.0);
    const double pad = y1 == y0 ? 1.0 : 0.05 * (y1 - y0);
    y0 -= pad;
    if (y1 > 0) y1 += pad;
  }

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" +
         num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  // y ticks: decades for the log axis, five even steps otherwise.
  std::vector<double> yticks;
  if (log_y) {
    const int step = std::max(1, static_cast<int>(std::ceil((y1 - y0) / 8)));
    for (double e = y0; e <= y1 + 1e-9; e += step) yticks.push_back(e);
  } else {
    for (int k = 0; k <= 5; ++k) yticks.push_back(y0 + k * (y1 - y0) / 5);
  }
  for (double t : yticks) {
    svg += "<line x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(sy(t)) + "\" x2=\"" + num(kLeft + pw) +
           "\" y2=\"" + num(sy(t)) + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(sy(t) + 4) + "\" text-anchor=\"end\">" +
           (log_y ? "1e" + std::to_string(static_cast<int>(std::lround(t))) : label(t)) + "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double t = x0 + k * (x1 - x0) / 5;
    svg += "<text x=\"" + num(sx(t)) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
           label(t) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + ph / 2) + ")\">" + (log_y ? "loss" : "gap") + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < series[k].points.size(); ++j) {
      const auto& [x, y] = series[k].points[j];
      svg += (j ? " " : "") + num(sx(x)) + "," + num(sy(y));
    }
    svg += "\"/>\n";
    const double ly = kTop + 10 + 18 * static_cast<double>(k);
    svg += "<line x1=\"" + num(kLeft + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kLeft + pw + 32) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + pw + 38) + "\" y=\"" + num(ly + 4) + "\">" + series[k].name +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void render_plot(const std::vector<RunLog>& logs, const std::string& path, PlotKind kind) {
  write_atomic(path, render_svg(logs, kind));
}

}  // namespace kfac2l
