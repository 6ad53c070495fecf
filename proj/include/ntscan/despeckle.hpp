#pragma once

// Iterative median-based speckle detection and removal.
//
// Each pass computes the window median m(i,j) of the current image and the
// residual |m(i,j) - I(i,j)|. Pixels whose residual is below the threshold are
// flagged good (1) and frozen; the remaining pixels take their median value
// and are re-examined in the next pass. Medians are always read from the
// image as it stood at the start of the pass, so the result does not depend
// on scan order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ntscan/image.hpp"

namespace ntscan {

struct DespeckleParams {
  int window = 3;
  double threshold = 20.0;
  int max_iters = 10;

  void validate() const {
    if (window < 3 || window % 2 == 0) {
      throw std::invalid_argument("despeckle window must be odd and >= 3, got " +
                                  std::to_string(window));
    }
    if (!(threshold > 0.0) || threshold > 255.0) {
      throw std::invalid_argument("despeckle threshold must lie in (0, 255]");
    }
    if (max_iters < 1) throw std::invalid_argument("despeckle max_iters must be positive");
  }
};

/// 1 = good pixel, 0 = speckle-corrupted.
using FlagMap = Mask;

enum class DespeckleTermination { AllClean, MaxIters };

inline const char* to_string(DespeckleTermination t) {
  return t == DespeckleTermination::AllClean ? "all-clean" : "max-iters";
}

struct DespeckleReport {
  int iterations_run = 0;
  std::vector<std::size_t> flags_per_iteration;  // corrupted-pixel count per pass
  DespeckleTermination terminated_by = DespeckleTermination::AllClean;
};

/// Median of the window x window neighbourhood, edge-replicated. The window
/// holds an odd number of samples, so the median is a single sample.
inline std::uint8_t window_median(const Raster<std::uint8_t>& img, int row, int col, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("median window must be odd");
  if (!img.contains(row, col)) throw std::out_of_range("median centre outside image");
  const int half = window / 2;
  // Counting sort over the 256 intensity levels would be faster for large
  // windows; windows here are small.
  std::vector<std::uint8_t> samples;
  samples.reserve(static_cast<std::size_t>(window) * static_cast<std::size_t>(window));
  for (int dr = -half; dr <= half; ++dr) {
    for (int dc = -half; dc <= half; ++dc) samples.push_back(img.clamped(row + dr, col + dc));
  }
  auto mid = samples.begin() + static_cast<long>(samples.size() / 2);
  std::nth_element(samples.begin(), mid, samples.end());
  return *mid;
}

namespace detail {

inline bool residual_ok(std::uint8_t median, std::uint8_t value, double threshold) {
  return std::abs(static_cast<int>(median) - static_cast<int>(value)) < threshold;
}

}  // namespace detail

inline FlagMap speckle_flags(const Raster<std::uint8_t>& img, const DespeckleParams& params) {
  params.validate();
  FlagMap flags(img.width(), img.height(), 0);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      flags(r, c) = detail::residual_ok(window_median(img, r, c, params.window), img(r, c),
                                        params.threshold)
                        ? 1
                        : 0;
    }
  }
  return flags;
}

inline std::pair<GrayImage, DespeckleReport> despeckle(const GrayImage& img,
                                                       const DespeckleParams& params) {
  params.validate();
  GrayImage current = img;
  DespeckleReport report;

  // Pixels still under examination, as flat indices.
  std::vector<std::size_t> active(img.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;

  const int w = img.width();
  for (int iter = 1; iter <= params.max_iters; ++iter) {
    report.iterations_run = iter;
    std::vector<std::pair<std::size_t, std::uint8_t>> replacements;
    for (const std::size_t idx : active) {
      const int r = static_cast<int>(idx / static_cast<std::size_t>(w));
      const int c = static_cast<int>(idx % static_cast<std::size_t>(w));
      const std::uint8_t m = window_median(current, r, c, params.window);
      if (!detail::residual_ok(m, current.data()[idx], params.threshold)) {
        replacements.emplace_back(idx, m);
      }
    }
    report.flags_per_iteration.push_back(replacements.size());
    if (replacements.empty()) {
      report.terminated_by = DespeckleTermination::AllClean;
      return {std::move(current), std::move(report)};
    }
    active.clear();
    for (const auto& [idx, m] : replacements) {
      current.data()[idx] = m;
      active.push_back(idx);
    }
  }
  report.terminated_by = DespeckleTermination::MaxIters;
  return {std::move(current), std::move(report)};
}

/// Plain single-pass median filter. Reference for the selective filter.
inline GrayImage median_filter(const GrayImage& img, int window) {
  GrayImage out = img;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) out(r, c) = window_median(img, r, c, window);
  }
  return out;
}

/// Peak signal-to-noise ratio in dB; +inf for identical images.
inline double psnr(const Raster<std::uint8_t>& a, const Raster<std::uint8_t>& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.empty()) {
    throw std::invalid_argument("psnr needs equal, non-empty rasters");
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace ntscan
