#include "sharelr/harness/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace sharelr {

double DrowsinessIndex(double tau, double tau0) {
  if (!(tau >= 0)) throw std::invalid_argument(fmt::format("response time must be non-negative, got {}", tau));
  if (!(tau0 > 0)) throw std::invalid_argument(fmt::format("threshold must be positive, got {}", tau0));
  double z = std::exp(-(tau - tau0));
  return std::max(0.0, (1 - z) / (1 + z));
}

std::vector<double> SmoothMovingAverage(std::span<const double> series, double window_seconds,
                                        double period_seconds) {
  if (series.empty()) throw std::invalid_argument("cannot smooth an empty series");
  if (!(window_seconds > 0) || !(period_seconds > 0)) {
    throw std::invalid_argument("window and sample period must be positive");
  }
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  const auto h = static_cast<std::ptrdiff_t>(std::llround(window_seconds / period_seconds) / 2);
  std::vector<double> out(series.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::ptrdiff_t half = std::min({h, i, n - 1 - i});
    double sum = 0;
    for (std::ptrdiff_t j = i - half; j <= i + half; ++j) sum += series[j];
    out[i] = sum / static_cast<double>(2 * half + 1);
  }
  return out;
}

}  // namespace sharelr
