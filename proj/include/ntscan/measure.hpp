#pragma once

// Masking, blob analysis, thickness estimation, classification and cohort
// statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ntscan/errors.hpp"
#include "ntscan/image.hpp"
#include "ntscan/meanshift.hpp"

namespace ntscan {

struct Point2 {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const Point2&) const = default;
};

struct PixelPos {
  int row = 0;
  int col = 0;
  bool operator==(const PixelPos&) const = default;
};

struct BoundingBox {
  int min_row = 0;
  int min_col = 0;
  int max_row = 0;
  int max_col = 0;
};

/// Second moments of a pixel set, each pixel taken as a unit square
/// (hence the 1/12 on the diagonal). Per unit area, about the centroid.
struct Moments {
  double rr = 0.0;
  double rc = 0.0;
  double cc = 0.0;

  std::pair<double, double> eigenvalues() const {
    const double mean = 0.5 * (rr + cc);
    const double disc = std::sqrt(0.25 * (rr - cc) * (rr - cc) + rc * rc);
    return {mean + disc, mean - disc};
  }
};

struct Blob {
  std::vector<PixelPos> pixels;  // row-major order
  std::size_t area = 0;
  Point2 centroid;
  Moments moments;
  BoundingBox bbox;

  /// Ratio of principal moment eigenvalues, >= 1.
  double elongation() const {
    const auto [l1, l2] = moments.eigenvalues();
    return l1 / l2;
  }
};

inline Blob make_blob(std::vector<PixelPos> pixels) {
  if (pixels.empty()) throw std::invalid_argument("blob needs at least one pixel");
  std::sort(pixels.begin(), pixels.end(), [](const PixelPos& a, const PixelPos& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  Blob b;
  b.area = pixels.size();
  b.bbox = {pixels.front().row, pixels.front().col, pixels.front().row, pixels.front().col};
  double sr = 0.0;
  double sc = 0.0;
  for (const auto& p : pixels) {
    sr += p.row;
    sc += p.col;
    b.bbox.min_row = std::min(b.bbox.min_row, p.row);
    b.bbox.max_row = std::max(b.bbox.max_row, p.row);
    b.bbox.min_col = std::min(b.bbox.min_col, p.col);
    b.bbox.max_col = std::max(b.bbox.max_col, p.col);
  }
  const double n = static_cast<double>(b.area);
  b.centroid = {sr / n, sc / n};
  double mrr = 0.0;
  double mrc = 0.0;
  double mcc = 0.0;
  for (const auto& p : pixels) {
    const double dr = p.row - b.centroid.row;
    const double dc = p.col - b.centroid.col;
    mrr += dr * dr;
    mrc += dr * dc;
    mcc += dc * dc;
  }
  b.moments = {mrr / n + 1.0 / 12.0, mrc / n, mcc / n + 1.0 / 12.0};
  b.pixels = std::move(pixels);
  return b;
}

/// Mask of the cluster with the lowest mean intensity (the anechoic fluid).
/// Ties go to the lower label. With merge_range > 0, every cluster whose mean
/// lies within merge_range of the darkest mean joins the mask as well.
inline Mask binarize(const LabelMap& labels, const Raster<std::uint8_t>& roi_img,
                     double merge_range = 0.0) {
  if (!(merge_range >= 0.0)) throw std::invalid_argument("merge_range must be >= 0");
  if (labels.labels.width() != roi_img.width() || labels.labels.height() != roi_img.height()) {
    throw std::invalid_argument("label map does not cover the ROI image");
  }
  if (labels.cluster_count < 2) {
    throw NoTranslucency("segmentation produced a single cluster; no translucent region");
  }
  std::vector<double> sum(static_cast<std::size_t>(labels.cluster_count), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(labels.cluster_count), 0);
  for (std::size_t i = 0; i < roi_img.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels.labels.data()[i]);
    sum[l] += roi_img.data()[i];
    ++cnt[l];
  }
  std::size_t darkest = 0;
  double darkest_mean = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < sum.size(); ++l) {
    if (cnt[l] == 0) continue;
    const double mean = sum[l] / static_cast<double>(cnt[l]);
    if (mean < darkest_mean) {
      darkest_mean = mean;
      darkest = l;
    }
  }
  std::vector<std::uint8_t> selected(sum.size(), 0);
  selected[darkest] = 1;
  for (std::size_t l = 0; l < sum.size(); ++l) {
    if (cnt[l] != 0 && sum[l] / static_cast<double>(cnt[l]) <= darkest_mean + merge_range) {
      selected[l] = 1;
    }
  }
  Mask mask(roi_img.width(), roi_img.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask.data()[i] = selected[static_cast<std::size_t>(labels.labels.data()[i])];
  }
  return mask;
}

/// Binary opening with a (2 radius + 1)^2 square; pixels outside the raster
/// count as background for erosion.
inline Mask open_mask(const Mask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("opening radius must be >= 0");
  if (radius == 0 || mask.empty()) return mask;
  auto pass = [&](const Mask& in, bool erode) {
    Mask out(in.width(), in.height(), 0);
    for (int r = 0; r < in.height(); ++r) {
      for (int c = 0; c < in.width(); ++c) {
        bool hit = erode;
        for (int dr = -radius; dr <= radius && hit == erode; ++dr) {
          for (int dc = -radius; dc <= radius; ++dc) {
            const bool on = in.contains(r + dr, c + dc) && in(r + dr, c + dc);
            if (erode && !on) { hit = false; break; }
            if (!erode && on) { hit = true; break; }
          }
        }
        out(r, c) = hit ? 1 : 0;
      }
    }
    return out;
  };
  return pass(pass(mask, true), false);
}

/// 8-connected components, largest first; equal areas keep row-major order
/// of their first pixel.
inline std::vector<Blob> connected_components(const Mask& mask) {
  int count = 0;
  const Raster<int> region = detail::label_regions<std::uint8_t>(
      mask, count, [](const std::uint8_t& v) { return v != 0; });
  std::vector<std::vector<PixelPos>> groups(static_cast<std::size_t>(count));
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      const int id = region(r, c);
      if (id >= 0) groups[static_cast<std::size_t>(id)].push_back({r, c});
    }
  }
  std::vector<Blob> blobs;
  blobs.reserve(groups.size());
  for (auto& g : groups) blobs.push_back(make_blob(std::move(g)));
  std::stable_sort(blobs.begin(), blobs.end(),
                   [](const Blob& a, const Blob& b) { return a.area > b.area; });
  return blobs;
}

/// Candidate maximizing area x elongation; the first one wins ties.
inline const Blob& select_nt_blob(const std::vector<Blob>& blobs) {
  if (blobs.empty()) throw NoTranslucency("no candidate blob in the mask");
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    const double score = static_cast<double>(blobs[i].area) * blobs[i].elongation();
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return blobs[best];
}

struct BlobAxis {
  Point2 direction;  // unit vector along the long axis, (row, col)
  Point2 centroid;

  /// Unit normal; (direction, normal) is a right-handed frame.
  Point2 normal() const { return {-direction.col, direction.row}; }
};

/// Principal eigenvector of the second-moment matrix. Sign: positive row
/// component, or positive column component when the row component is zero.
inline BlobAxis blob_axis(const Blob& blob) {
  if (blob.area < 3) throw AxisIllDefined("blob too small for an axis (area < 3)");
  const auto& m = blob.moments;
  const auto [l1, l2] = m.eigenvalues();
  if (l1 - l2 <= 1e-9 * (l1 + l2)) {
    throw AxisIllDefined("blob second moments are isotropic; long axis undefined");
  }
  // (A - l1 I) v = 0: take the better conditioned of the two row solutions.
  Point2 v1{m.rc, l1 - m.rr};
  Point2 v2{l1 - m.cc, m.rc};
  Point2 v = (std::hypot(v1.row, v1.col) >= std::hypot(v2.row, v2.col)) ? v1 : v2;
  const double norm = std::hypot(v.row, v.col);
  v = {v.row / norm, v.col / norm};
  constexpr double kZero = 1e-12;
  if (v.row < -kZero || (std::abs(v.row) <= kZero && v.col < 0.0)) v = {-v.row, -v.col};
  if (std::abs(v.row) <= kZero) v.row = 0.0;
  if (std::abs(v.col) <= kZero) v.col = 0.0;
  return {v, blob.centroid};
}

struct NtMeasurement {
  double thickness_mm = 0.0;
  double thickness_px = 0.0;
  std::pair<Point2, Point2> chord;  // caliper positions, pixel coordinates
  std::size_t blob_area_px = 0;
  std::optional<double> gestation_weeks;
  double mm_per_px = 0.0;
};

/// Maximum blob width perpendicular to the axis. Pixels are binned by their
/// rounded position along the axis; a bin's width runs from the outer edge
/// of its lowest pixel to the outer edge of its highest one along the
/// normal. The profile of bin widths goes through a running lower median
/// over `profile_window` bins (1 = raw profile) before the maximum is taken,
/// which keeps one-pixel boundary bleed from dominating on speckled masks.
/// The chord joins the two edge points of the bin that realizes the maximum.
inline NtMeasurement nt_thickness(const Blob& blob, const BlobAxis& axis,
                                  std::optional<double> mm_per_px,
                                  std::optional<double> gestation_weeks = std::nullopt,
                                  int profile_window = 1) {
  if (!mm_per_px) throw CalibrationRequired("mm_per_px calibration is required for thickness");
  if (!(*mm_per_px > 0.0)) throw std::invalid_argument("mm_per_px must be > 0");
  if (blob.pixels.empty()) throw std::invalid_argument("empty blob");
  if (profile_window < 1 || profile_window % 2 == 0) {
    throw std::invalid_argument("profile window must be a positive odd number");
  }

  const Point2 a = axis.direction;
  const Point2 n = axis.normal();
  struct Extent {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    double width() const { return hi - lo + 1.0; }
  };
  std::map<long, Extent> bins;
  for (const auto& p : blob.pixels) {
    const double dr = p.row - axis.centroid.row;
    const double dc = p.col - axis.centroid.col;
    const double t = dr * a.row + dc * a.col;
    const double s = dr * n.row + dc * n.col;
    auto& e = bins[std::lround(std::floor(t + 0.5))];
    e.lo = std::min(e.lo, s);
    e.hi = std::max(e.hi, s);
  }

  std::vector<std::pair<long, Extent>> profile(bins.begin(), bins.end());
  const long half = profile_window / 2;
  std::size_t best = 0;
  double best_width = -1.0;
  std::vector<std::size_t> window;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    window.clear();
    for (std::size_t j = 0; j < profile.size(); ++j) {
      if (std::abs(profile[j].first - profile[i].first) <= half) window.push_back(j);
    }
    // Lower median keeps the pick an actual member of the window.
    const auto mid = window.begin() + static_cast<std::ptrdiff_t>((window.size() - 1) / 2);
    std::nth_element(window.begin(), mid, window.end(), [&](std::size_t x, std::size_t y) {
      const double wx = profile[x].second.width();
      const double wy = profile[y].second.width();
      return wx != wy ? wx < wy : x < y;
    });
    const double w = profile[*mid].second.width();
    if (w > best_width) {
      best_width = w;
      best = *mid;
    }
  }

  const auto& [best_bin, best_extent] = profile[best];
  const double t = static_cast<double>(best_bin);
  const Point2 base{axis.centroid.row + t * a.row, axis.centroid.col + t * a.col};
  const double s0 = best_extent.lo - 0.5;
  const double s1 = best_extent.hi + 0.5;

  NtMeasurement m;
  m.thickness_px = best_width;
  m.mm_per_px = *mm_per_px;
  m.thickness_mm = best_width * *mm_per_px;
  m.chord = {Point2{base.row + s0 * n.row, base.col + s0 * n.col},
             Point2{base.row + s1 * n.row, base.col + s1 * n.col}};
  m.blob_area_px = blob.area;
  m.gestation_weeks = gestation_weeks;
  return m;
}

struct WeekNorm {
  double mean_mm = 0.0;
  double sd_mm = 0.0;
};

/// Normal NT per completed gestation week plus a global cutoff.
struct NormTable {
  std::map<int, WeekNorm> weeks;
  double cutoff_mm = 2.5;
  double sd_multiplier = 1.0;  // week rule: mean + k * sd

  void validate() const {
    if (!(cutoff_mm > 0.0)) throw std::invalid_argument("norm table cutoff_mm must be > 0");
    if (!(sd_multiplier >= 0.0)) throw std::invalid_argument("sd_multiplier must be >= 0");
    for (int w = 11; w <= 14; ++w) {
      if (!weeks.contains(w)) {
        throw std::invalid_argument("norm table must cover weeks 11-14, missing " +
                                    std::to_string(w));
      }
    }
  }
};

/// Means with the reported +/- spread for normal fetuses, weeks 11-14.
inline NormTable default_norm_table() {
  NormTable t;
  t.weeks = {{11, {1.35, 0.41}}, {12, {1.45, 0.43}}, {13, {1.11, 0.62}}, {14, {1.87, 0.25}}};
  t.cutoff_mm = 2.5;
  return t;
}

enum class NtStatus { Normal, Increased };

inline const char* to_string(NtStatus s) { return s == NtStatus::Normal ? "normal" : "increased"; }

struct Classification {
  NtStatus status = NtStatus::Normal;
  std::string rule_fired = "none";  // "global_cutoff" | "week_mean_plus_sd" | "none"
  double cutoff_mm = 0.0;
  std::optional<double> week_threshold_mm;
};

namespace detail {
// Thresholds come from decimal table entries; differences below this are
// representation noise, not a measurement above the threshold.
constexpr double kThresholdSlack = 1e-9;
inline bool exceeds(double value, double threshold) { return value - threshold > kThresholdSlack; }
}  // namespace detail

inline Classification classify(const NtMeasurement& m, const NormTable& norms) {
  if (!m.gestation_weeks) throw std::invalid_argument("classification needs gestation weeks");
  const double weeks = *m.gestation_weeks;
  if (!(weeks >= 10.0 && weeks < 15.0)) {
    throw std::invalid_argument("gestation weeks " + std::to_string(weeks) +
                                " outside the screening window [10, 15)");
  }
  Classification out;
  out.cutoff_mm = norms.cutoff_mm;
  const auto it = norms.weeks.find(static_cast<int>(std::floor(weeks)));
  if (it != norms.weeks.end()) {
    out.week_threshold_mm = it->second.mean_mm + norms.sd_multiplier * it->second.sd_mm;
  }
  if (detail::exceeds(m.thickness_mm, norms.cutoff_mm)) {
    out.status = NtStatus::Increased;
    out.rule_fired = "global_cutoff";
  } else if (out.week_threshold_mm && detail::exceeds(m.thickness_mm, *out.week_threshold_mm)) {
    out.status = NtStatus::Increased;
    out.rule_fired = "week_mean_plus_sd";
  }
  return out;
}

struct WeekStats {
  int week = 0;
  std::size_t n = 0;
  double mean_mm = 0.0;
  double sd_mm = 0.0;       // sample (n - 1) estimator
  double variance_mm2 = 0.0;
  bool sd_defined = false;  // false for single-subject buckets (sd reported as 0)
};

struct CohortStats {
  std::vector<WeekStats> weeks;  // ascending week
};

/// Buckets by completed week; Welford accumulation per bucket.
inline CohortStats aggregate_cohort(const std::vector<NtMeasurement>& measurements) {
  struct Acc {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
  };
  std::map<int, Acc> acc;
  for (const auto& m : measurements) {
    if (!m.gestation_weeks) throw std::invalid_argument("cohort measurement lacks gestation weeks");
    auto& a = acc[static_cast<int>(std::floor(*m.gestation_weeks))];
    ++a.n;
    const double delta = m.thickness_mm - a.mean;
    a.mean += delta / static_cast<double>(a.n);
    a.m2 += delta * (m.thickness_mm - a.mean);
  }
  CohortStats out;
  for (const auto& [week, a] : acc) {
    WeekStats s;
    s.week = week;
    s.n = a.n;
    s.mean_mm = a.mean;
    if (a.n > 1) {
      s.variance_mm2 = a.m2 / static_cast<double>(a.n - 1);
      s.sd_mm = std::sqrt(s.variance_mm2);
      s.sd_defined = true;
    }
    out.weeks.push_back(s);
  }
  return out;
}

}  // namespace ntscan
