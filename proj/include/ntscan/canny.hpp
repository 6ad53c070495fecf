#pragma once

// Canny edge detection.
//
// Smoothing runs in integer fixed point (quantized Gaussian taps, exact
// int64 sums), so the gradient field of a 90-degree rotated image is exactly
// the rotated field. Non-maximum suppression breaks plateau ties by the
// gradient's sign: a pixel must strictly beat its neighbour behind it and
// at least match the one ahead, which keeps a symmetric step one pixel wide.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ntscan/image.hpp"

namespace ntscan {

struct CannyParams {
  double sigma = 1.0;
  double t_low = 0.1;
  double t_high = 0.3;
  bool relative = true;  // thresholds as fractions of the maximum magnitude

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("canny sigma must be > 0");
    if (!(t_low > 0.0) || !(t_low < t_high)) {
      throw std::invalid_argument("canny thresholds must satisfy 0 < t_low < t_high");
    }
  }
};

/// Gradient direction quantized to 0, 45, 90 or 135 degrees (y axis up).
enum class Direction : std::uint8_t { Deg0 = 0, Deg45 = 45, Deg90 = 90, Deg135 = 135 };

struct GradientField {
  Raster<double> magnitude;  // intensity levels per pixel
  Raster<Direction> direction;
  Raster<std::int64_t> gx;   // fixed-point central differences
  Raster<std::int64_t> gy;   // (row axis, pointing down)
  double scale = 1.0;        // gx / scale is the real derivative
};

struct EdgeMap {
  Mask edges;
  Raster<double> magnitude;
  Raster<Direction> direction;
  double low = 0.0;   // absolute thresholds actually applied
  double high = 0.0;

  std::size_t edge_count() const { return popcount(edges); }
};

namespace detail {

inline std::vector<std::int64_t> gaussian_taps(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<std::int64_t> taps(static_cast<std::size_t>(2 * radius + 1));
  for (int k = -radius; k <= radius; ++k) {
    taps[static_cast<std::size_t>(k + radius)] =
        std::llround(1024.0 * std::exp(-0.5 * k * k / (sigma * sigma)));
  }
  return taps;
}

// tan(22.5 deg)
constexpr double kTanEighth = 0.41421356237309503;

inline Direction quantize(std::int64_t gx, std::int64_t gy) {
  const double ax = std::abs(static_cast<double>(gx));
  const double ay = std::abs(static_cast<double>(gy));
  if (ay < kTanEighth * ax) return Direction::Deg0;
  if (ax < kTanEighth * ay) return Direction::Deg90;
  if (ax == 0.0 && ay == 0.0) return Direction::Deg0;
  // Row axis points down: equal signs mean the gradient points down-right,
  // i.e. -45 degrees with the y axis up.
  return ((gx > 0) == (gy > 0)) ? Direction::Deg135 : Direction::Deg45;
}

inline int sign(std::int64_t v) { return (v > 0) - (v < 0); }

}  // namespace detail

inline GradientField smooth_and_gradient(const Raster<std::uint8_t>& img, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("canny sigma must be > 0");
  const auto taps = detail::gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  std::int64_t tap_sum = 0;
  for (auto t : taps) tap_sum += t;

  const int w = img.width();
  const int h = img.height();
  Raster<std::int64_t> horiz(w, h, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::int64_t acc = 0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] * img.clamped(r, c + k);
      }
      horiz(r, c) = acc;
    }
  }
  Raster<std::int64_t> smooth(w, h, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::int64_t acc = 0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] * horiz.clamped(r + k, c);
      }
      smooth(r, c) = acc;
    }
  }

  GradientField g;
  g.scale = 2.0 * static_cast<double>(tap_sum) * static_cast<double>(tap_sum);
  g.gx = Raster<std::int64_t>(w, h, 0);
  g.gy = Raster<std::int64_t>(w, h, 0);
  g.magnitude = Raster<double>(w, h, 0.0);
  g.direction = Raster<Direction>(w, h, Direction::Deg0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::int64_t dx = smooth.clamped(r, c + 1) - smooth.clamped(r, c - 1);
      const std::int64_t dy = smooth.clamped(r + 1, c) - smooth.clamped(r - 1, c);
      g.gx(r, c) = dx;
      g.gy(r, c) = dy;
      const double fx = static_cast<double>(dx);
      const double fy = static_cast<double>(dy);
      g.magnitude(r, c) = std::sqrt(fx * fx + fy * fy) / g.scale;
      g.direction(r, c) = detail::quantize(dx, dy);
    }
  }
  return g;
}

/// Offset of the neighbour ahead along the quantized gradient direction.
inline std::pair<int, int> gradient_step(const GradientField& g, int r, int c) {
  const std::int64_t gx = g.gx(r, c);
  const std::int64_t gy = g.gy(r, c);
  switch (g.direction(r, c)) {
    case Direction::Deg0: return {0, gx >= 0 ? 1 : -1};
    case Direction::Deg90: return {gy >= 0 ? 1 : -1, 0};
    default: return {detail::sign(gy), detail::sign(gx)};
  }
}

inline EdgeMap canny(const Raster<std::uint8_t>& img, const CannyParams& params) {
  params.validate();
  const GradientField g = smooth_and_gradient(img, params.sigma);
  const int w = img.width();
  const int h = img.height();

  double max_mag = 0.0;
  for (double m : g.magnitude.data()) max_mag = std::max(max_mag, m);

  EdgeMap out;
  out.magnitude = g.magnitude;
  out.direction = g.direction;
  out.edges = Mask(w, h, 0);
  out.low = params.relative ? params.t_low * max_mag : params.t_low;
  out.high = params.relative ? params.t_high * max_mag : params.t_high;
  if (max_mag == 0.0) return out;

  auto mag_at = [&](int r, int c) { return g.magnitude.contains(r, c) ? g.magnitude(r, c) : 0.0; };

  // Candidates: local maxima along the gradient that clear the low threshold.
  Mask candidate(w, h, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = g.magnitude(r, c);
      if (m <= 0.0 || m < out.low) continue;
      const auto [dr, dc] = gradient_step(g, r, c);
      if (m >= mag_at(r + dr, c + dc) && m > mag_at(r - dr, c - dc)) candidate(r, c) = 1;
    }
  }

  // Hysteresis: grow from strong candidates through 8-connected candidates.
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (candidate(r, c) && g.magnitude(r, c) >= out.high && !out.edges(r, c)) {
        out.edges(r, c) = 1;
        stack.emplace_back(r, c);
        while (!stack.empty()) {
          const auto [pr, pc] = stack.back();
          stack.pop_back();
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              const int nr = pr + dr;
              const int nc = pc + dc;
              if (candidate.contains(nr, nc) && candidate(nr, nc) && !out.edges(nr, nc)) {
                out.edges(nr, nc) = 1;
                stack.emplace_back(nr, nc);
              }
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace ntscan
