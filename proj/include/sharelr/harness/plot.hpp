#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sharelr/harness/report.hpp"

namespace sharelr {

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x when drawn
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;

  // Standalone SVG document.
  std::string Svg() const;
};

// Training and inference seconds against m, clear and SMC, per scenario.
LineChart RuntimeChart(const std::vector<RunReport>& reports);
// RMSE against m, clear and SMC, per scenario; reports without RMSE skipped.
LineChart RmseChart(const std::vector<RunReport>& reports);

// Writes runtime.svg and rmse.svg into `dir`; returns the paths written.
std::vector<std::filesystem::path> WritePlots(const std::vector<RunReport>& reports, const std::filesystem::path& dir);

}  // namespace sharelr
