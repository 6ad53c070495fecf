#pragma once

// Synthetic NT phantoms: soft tissue, an anechoic fluid band of known
// thickness and a bright skin line, under multiplicative gamma speckle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "ntscan/image.hpp"

namespace ntscan {

struct PhantomSpec {
  int width = 128;
  int height = 128;
  double mm_per_px = 0.1;
  double band_thickness_mm = 2.0;
  double band_orientation_deg = 0.0;  // 0 = band runs along the columns
  std::optional<double> band_curvature_radius_px;
  double skin_thickness_px = 6.0;
  std::uint8_t tissue_intensity = 120;  // soft tissue
  std::uint8_t fluid_intensity = 25;    // translucent fluid
  std::uint8_t skin_intensity = 210;    // skin line
  double speckle_looks = 4.0;
  std::uint64_t seed = 1;

  double band_thickness_px() const { return band_thickness_mm / mm_per_px; }

  void validate() const {
    if (width < 16 || height < 16) throw std::invalid_argument("phantom must be at least 16x16");
    if (!(mm_per_px > 0.0)) throw std::invalid_argument("phantom mm_per_px must be > 0");
    if (!(band_thickness_mm > 0.0)) throw std::invalid_argument("band thickness must be > 0");
    if (band_thickness_px() < 4.0 - 1e-9) {
      throw std::invalid_argument("band thickness " + std::to_string(band_thickness_px()) +
                                  " px is below the 4 px measurable minimum");
    }
    if (!(skin_thickness_px >= 0.0)) throw std::invalid_argument("skin thickness must be >= 0");
    if (!(fluid_intensity < tissue_intensity && fluid_intensity < skin_intensity)) {
      throw std::invalid_argument("fluid intensity must be darker than tissue and skin");
    }
    if (!(speckle_looks >= 1.0)) throw std::invalid_argument("speckle looks must be >= 1");
    const double theta = band_orientation_deg * std::numbers::pi / 180.0;
    const double half_extent = 0.5 * (width - 1) * std::abs(std::sin(theta)) +
                               0.5 * (height - 1) * std::abs(std::cos(theta));
    const double half_band = 0.5 * band_thickness_px() + skin_thickness_px;
    if (half_band + 2.0 > half_extent) {
      throw std::invalid_argument("band and skin exceed the image bounds");
    }
    if (band_curvature_radius_px && !(*band_curvature_radius_px > half_band + 1.0)) {
      throw std::invalid_argument("curvature radius must exceed the band half-width");
    }
  }
};

struct Phantom {
  GrayImage image;  // speckled
  GrayImage clean;
  Mask truth_mask;
  double truth_thickness_mm = 0.0;
  double saturation_fraction = 0.0;  // speckled pixels clipped at 255
};

struct SpeckleOutput {
  GrayImage image;
  std::size_t saturated = 0;
};

/// out = clamp(round(in * g)), g ~ Gamma(shape L, scale 1/L) per pixel in
/// row-major order from one seeded stream.
inline SpeckleOutput apply_speckle_counted(const GrayImage& img, double looks, std::uint64_t seed) {
  if (!(looks >= 1.0)) throw std::invalid_argument("speckle looks must be >= 1");
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(looks, 1.0 / looks);
  SpeckleOutput out{img, 0};
  for (auto& v : out.image.data()) {
    const double noisy = std::round(static_cast<double>(v) * gamma(rng));
    if (noisy > 255.0) ++out.saturated;
    v = static_cast<std::uint8_t>(std::clamp(noisy, 0.0, 255.0));
  }
  return out;
}

inline GrayImage apply_speckle(const GrayImage& img, double looks, std::uint64_t seed) {
  return apply_speckle_counted(img, looks, seed).image;
}

/// Signed offset of pixel centre (row, col) across the band centreline,
/// positive toward the skin side.
inline double band_offset(const PhantomSpec& spec, double row, double col) {
  const double theta = spec.band_orientation_deg * std::numbers::pi / 180.0;
  const double nr = std::cos(theta);
  const double nc = std::sin(theta);
  const double cr = 0.5 * (spec.height - 1);
  const double cc = 0.5 * (spec.width - 1);
  if (!spec.band_curvature_radius_px) return (row - cr) * nr + (col - cc) * nc;
  const double radius = *spec.band_curvature_radius_px;
  const double kr = cr + radius * nr;
  const double kc = cc + radius * nc;
  return radius - std::hypot(row - kr, col - kc);
}

inline Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const double half = 0.5 * spec.band_thickness_px();
  Phantom ph;
  ph.clean = GrayImage(spec.width, spec.height, spec.tissue_intensity);
  ph.truth_mask = Mask(spec.width, spec.height, 0);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const double s = band_offset(spec, r, c);
      if (s >= -half && s < half) {
        ph.clean(r, c) = spec.fluid_intensity;
        ph.truth_mask(r, c) = 1;
      } else if (s >= half && s < half + spec.skin_thickness_px) {
        ph.clean(r, c) = spec.skin_intensity;
      }
    }
  }
  ph.clean.set_mm_per_px(spec.mm_per_px);
  auto speckled = apply_speckle_counted(ph.clean, spec.speckle_looks, spec.seed);
  ph.image = std::move(speckled.image);
  ph.image.set_mm_per_px(spec.mm_per_px);
  ph.saturation_fraction =
      static_cast<double>(speckled.saturated) / static_cast<double>(ph.image.size());
  ph.truth_thickness_mm = spec.band_thickness_mm;
  return ph;
}

}  // namespace ntscan
