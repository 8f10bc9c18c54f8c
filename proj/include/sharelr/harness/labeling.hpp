#pragma once

#include <span>
#include <vector>

namespace sharelr {

// max{0, (1 - e^-(tau - tau0)) / (1 + e^-(tau - tau0))}. Throws
// std::invalid_argument for tau < 0 or tau0 <= 0.
double DrowsinessIndex(double tau, double tau0 = 1.0);

// Centered square moving average over a uniformly sampled series. The window
// spans 2h+1 samples with h = floor(round(window / period) / 2); near the ends
// it shrinks symmetrically so it stays centered. Throws on an empty series or
// non-positive window/period.
std::vector<double> SmoothMovingAverage(std::span<const double> series, double window_seconds,
                                        double period_seconds);

}  // namespace sharelr
