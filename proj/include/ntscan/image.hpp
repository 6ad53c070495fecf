#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ntscan {

/// Dense row-major 2-D raster.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw std::invalid_argument("raster dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Raster(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw std::invalid_argument("raster data length must equal width * height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  /// Edge-replicated access.
  const T& clamped(int row, int col) const {
    return data_[index(std::clamp(row, 0, height_ - 1), std::clamp(col, 0, width_ - 1))];
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Raster& other) const = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Binary raster, values in {0,1}.
using Mask = Raster<std::uint8_t>;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

using RgbImage = Raster<Rgb>;

/// 8-bit grayscale frame with optional isotropic calibration.
class GrayImage : public Raster<std::uint8_t> {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0) : Raster(width, height, fill) {}
  GrayImage(int width, int height, std::vector<std::uint8_t> data)
      : Raster(width, height, std::move(data)) {}

  std::optional<double> mm_per_px() const noexcept { return mm_per_px_; }
  void set_mm_per_px(std::optional<double> mm) {
    if (mm && !(*mm > 0.0)) throw std::invalid_argument("mm_per_px must be > 0");
    mm_per_px_ = mm;
  }

  bool operator==(const GrayImage& other) const = default;

 private:
  std::optional<double> mm_per_px_;
};

/// Operator-selected region of interest, in pixels. x is the column axis.
struct Roi {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;

  static constexpr int kMinSide = 16;

  bool operator==(const Roi&) const = default;
};

template <typename T>
bool roi_inside(const Roi& roi, const Raster<T>& img) noexcept {
  return roi.x0 >= 0 && roi.y0 >= 0 && roi.w > 0 && roi.h > 0 &&
         static_cast<long>(roi.x0) + roi.w <= img.width() &&
         static_cast<long>(roi.y0) + roi.h <= img.height();
}

/// Throws std::invalid_argument unless the ROI meets the minimum size and
/// lies inside `img`.
template <typename T>
void validate_roi(const Roi& roi, const Raster<T>& img) {
  if (roi.w < Roi::kMinSide || roi.h < Roi::kMinSide) {
    throw std::invalid_argument("ROI must be at least 16x16 pixels, got " +
                                std::to_string(roi.w) + "x" + std::to_string(roi.h));
  }
  if (!roi_inside(roi, img)) {
    throw std::invalid_argument("ROI (" + std::to_string(roi.x0) + "," + std::to_string(roi.y0) +
                                "," + std::to_string(roi.w) + "," + std::to_string(roi.h) +
                                ") exceeds image " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()));
  }
}

/// Sub-raster copy. Only bounds are checked; the 16-px minimum is an
/// operator-ROI rule enforced by validate_roi.
template <typename T>
Raster<T> crop_raster(const Raster<T>& img, const Roi& roi) {
  if (!roi_inside(roi, img)) throw std::invalid_argument("crop region outside image");
  Raster<T> out(roi.w, roi.h);
  for (int r = 0; r < roi.h; ++r) {
    for (int c = 0; c < roi.w; ++c) out(r, c) = img(roi.y0 + r, roi.x0 + c);
  }
  return out;
}

inline GrayImage crop(const GrayImage& img, const Roi& roi) {
  Raster<std::uint8_t> sub = crop_raster<std::uint8_t>(img, roi);
  GrayImage out(sub.width(), sub.height(), std::move(sub.data()));
  out.set_mm_per_px(img.mm_per_px());
  return out;
}

/// Joint spatial-range feature space: (row/h_s, col/h_s, intensity/h_r).
/// In these units the mean-shift window radius is 1.
struct FeaturePointSet {
  static constexpr std::size_t kDim = 3;
  using Point = std::array<double, kDim>;

  std::vector<Point> points;
  Roi origin_roi;
  double h_s = 1.0;
  double h_r = 1.0;

  std::size_t size() const noexcept { return points.size(); }
};

inline FeaturePointSet to_feature_points(const GrayImage& img, double h_s, double h_r,
                                         Roi origin = {}) {
  if (!(h_s > 0.0) || !(h_r > 0.0)) {
    throw std::invalid_argument("feature bandwidths must be > 0");
  }
  FeaturePointSet fs;
  fs.h_s = h_s;
  fs.h_r = h_r;
  fs.origin_roi = origin.w > 0 ? origin : Roi{0, 0, img.width(), img.height()};
  fs.points.reserve(img.size());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      fs.points.push_back({r / h_s, c / h_s, img(r, c) / h_r});
    }
  }
  return fs;
}

inline RgbImage gray_to_rgb(const Raster<std::uint8_t>& img) {
  RgbImage out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto v = img.data()[i];
    out.data()[i] = Rgb{v, v, v};
  }
  return out;
}

inline RgbImage overlay_mask(const GrayImage& img, const Mask& mask, Rgb color) {
  if (mask.width() != img.width() || mask.height() != img.height()) {
    throw std::invalid_argument("overlay mask dimensions differ from image");
  }
  RgbImage out = gray_to_rgb(img);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] != 0) out.data()[i] = color;
  }
  return out;
}

inline std::size_t popcount(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

/// BT.601 luma with round-half-up: (299 R + 587 G + 114 B + 500) / 1000.
constexpr std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

}  // namespace ntscan
