#pragma once

#include "sinodenoise/ct_physics.hpp"

#include <string>
#include <vector>

namespace sd::metrics {

// 10*log10(range^2 / MSE); returns +inf for identical images.
double psnr(const std::vector<float>& a, const std::vector<float>& b,
            int rows, int cols, double data_range);

// Mean local SSIM, 11x11 Gaussian window sigma = 1.5, K1 = 0.01, K2 = 0.03.
double ssim(const std::vector<float>& a, const std::vector<float>& b,
            int rows, int cols, double data_range);

// Gradient magnitude similarity deviation: 2x2 average-pool downsampling,
// Prewitt gradients, c = 0.0026 * range^2, result is the stddev of the map.
double gmsd(const std::vector<float>& a, const std::vector<float>& b,
            int rows, int cols, double data_range);

struct MetricRow {
  std::string dataset;
  std::string dose;
  std::string regime;
  std::string domain; // "projection" or "image"
  std::string metric; // "ssim", "psnr", "gmsd"
  double mean = 0.0;
  double stddev = 0.0;
  double data_range = 0.0;
};

// Per-frame metrics aggregated as mean +- std across frames.
std::vector<MetricRow> evaluate_pair(const FrameStack& denoised,
                                     const FrameStack& reference,
                                     const std::string& domain_tag,
                                     const std::string& dataset = "",
                                     const std::string& dose = "",
                                     const std::string& regime = "");

// Per-frame values of one metric ("psnr", "ssim", "gmsd") for distribution
// reporting (cross-test box plots).
std::vector<double> per_frame_metric(const FrameStack& denoised,
                                     const FrameStack& reference,
                                     const std::string& metric);

} // namespace sd::metrics
