#include "sharelr/harness/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

namespace sharelr {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 70;
constexpr double kRight = 160;
constexpr double kTop = 40;
constexpr double kBottom = 50;
constexpr std::array<const char*, 8> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string Escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Roughly five round tick values covering [lo, hi].
std::vector<double> Ticks(double lo, double hi) {
  double span = hi - lo;
  if (span <= 0) return {lo};
  double raw = span / 5;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) out.push_back(v);
  return out;
}

void Group(std::map<std::string, ChartSeries>& into, const std::string& name, double x, double y) {
  auto& s = into[name];
  s.name = name;
  s.points.emplace_back(x, y);
}

std::vector<ChartSeries> Values(std::map<std::string, ChartSeries> m) {
  std::vector<ChartSeries> out;
  for (auto& [_, s] : m) out.push_back(std::move(s));
  return out;
}

}  // namespace

std::string LineChart::Svg() const {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = 0, y_hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0;
    x_hi = 1;
    y_hi = 1;
  }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) y_hi = y_lo + 1;
  y_hi *= 1.05;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-size=\"15\">{3}</text>\n",
      kWidth, kHeight, kLeft, Escape(title));
  for (double t : Ticks(y_lo, y_hi)) {
    out += fmt::format(
        "<line x1=\"{0}\" x2=\"{1}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"#ddd\"/>"
        "<text x=\"{3}\" y=\"{4:.1f}\" text-anchor=\"end\">{5:g}</text>\n",
        kLeft, kLeft + pw, py(t), kLeft - 6, py(t) + 4, t);
  }
  for (double t : Ticks(x_lo, x_hi)) {
    out += fmt::format(
        "<line x1=\"{0:.1f}\" x2=\"{0:.1f}\" y1=\"{1}\" y2=\"{2}\" stroke=\"#999\"/>"
        "<text x=\"{0:.1f}\" y=\"{3}\" text-anchor=\"middle\">{4:g}</text>\n",
        px(t), kTop + ph, kTop + ph + 5, kTop + ph + 18, t);
  }
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", kLeft,
                     kTop, pw, ph);
  out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2, kHeight - 10,
                     Escape(x_label));
  out += fmt::format("<text transform=\"translate(16 {:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                     kTop + ph / 2, Escape(y_label));
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % kColors.size()];
    auto pts = series[i].points;
    std::sort(pts.begin(), pts.end());
    std::string path;
    for (auto [x, y] : pts) path += fmt::format("{:.1f},{:.1f} ", px(x), py(y));
    out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", path, color);
    for (auto [x, y] : pts) {
      out += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", px(x), py(y), color);
    }
    double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    out += fmt::format(
        "<line x1=\"{0}\" x2=\"{1}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"{3}\" stroke-width=\"2\"/>"
        "<text x=\"{4}\" y=\"{5:.1f}\">{6}</text>\n",
        kLeft + pw + 10, kLeft + pw + 30, ly, color, kLeft + pw + 36, ly + 4, Escape(series[i].name));
  }
  out += "</svg>\n";
  return out;
}

LineChart RuntimeChart(const std::vector<RunReport>& reports) {
  std::map<std::string, ChartSeries> s;
  for (const auto& r : reports) {
    auto m = static_cast<double>(r.m);
    Group(s, r.scenario + " train clear", m, r.train_clear_seconds);
    Group(s, r.scenario + " train SMC", m, r.train_smc_seconds);
    Group(s, r.scenario + " infer clear", m, r.infer_clear_seconds);
    Group(s, r.scenario + " infer SMC", m, r.infer_smc_seconds);
  }
  return LineChart{"Runtime against the number of parties", "m (source parties)", "seconds", Values(std::move(s))};
}

LineChart RmseChart(const std::vector<RunReport>& reports) {
  std::map<std::string, ChartSeries> s;
  for (const auto& r : reports) {
    if (!r.rmse_clear || !r.rmse_smc) continue;
    auto m = static_cast<double>(r.m);
    Group(s, r.scenario + " clear", m, *r.rmse_clear);
    Group(s, r.scenario + " SMC", m, *r.rmse_smc);
  }
  return LineChart{"RMSE against the number of parties", "m (source parties)", "RMSE", Values(std::move(s))};
}

std::vector<std::filesystem::path> WritePlots(const std::vector<RunReport>& reports,
                                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (auto& [name, chart] : {std::pair{"runtime.svg", RuntimeChart(reports)}, std::pair{"rmse.svg", RmseChart(reports)}}) {
    auto path = dir / name;
    std::ofstream out(path, std::ios::trunc);
    out << chart.Svg();
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    written.push_back(path);
  }
  return written;
}

}  // namespace sharelr
