#pragma once

// Despeckle -> crop -> segment -> edges -> mask -> blobs -> thickness ->
// classification, with every intermediate kept in the result.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntscan/canny.hpp"
#include "ntscan/despeckle.hpp"
#include "ntscan/errors.hpp"
#include "ntscan/image.hpp"
#include "ntscan/meanshift.hpp"
#include "ntscan/measure.hpp"

namespace ntscan {

struct PipelineConfig {
  DespeckleParams despeckle;
  MeanShiftParams meanshift;
  CannyParams canny;
  std::optional<double> mm_per_px;
  std::optional<double> gestation_weeks;
  std::optional<std::string> norm_table_path;
  NormTable norms = default_norm_table();
  // The darkest cluster counts as translucent only if its mean is at most
  // this fraction of the mean of the rest of the ROI.
  double max_fluid_ratio = 0.5;
  // Clusters whose mean is within this many intensity levels of the darkest
  // cluster join the fluid mask (0 keeps the darkest cluster alone).
  double fluid_merge_range = 12.0;
  // Square opening applied to the mask before blob analysis.
  int mask_open_radius = 1;
  // Running-median window (bins) over the width profile before its maximum.
  int profile_window = 31;

  void validate() const {
    despeckle.validate();
    meanshift.validate();
    canny.validate();
    norms.validate();
    if (mm_per_px && !(*mm_per_px > 0.0)) throw std::invalid_argument("mm_per_px must be > 0");
    if (gestation_weeks && !(*gestation_weeks >= 10.0 && *gestation_weeks < 15.0)) {
      throw std::invalid_argument("gestation weeks must lie in [10, 15)");
    }
    if (profile_window < 1 || profile_window % 2 == 0) {
      throw std::invalid_argument("profile_window must be a positive odd number");
    }
    if (!(fluid_merge_range >= 0.0)) throw std::invalid_argument("fluid_merge_range must be >= 0");
    if (mask_open_radius < 0) throw std::invalid_argument("mask_open_radius must be >= 0");
    if (!(max_fluid_ratio > 0.0 && max_fluid_ratio <= 1.0)) {
      throw std::invalid_argument("max_fluid_ratio must lie in (0, 1]");
    }
  }
};

/// Outcome of a run that did not crash.
enum class Finding { Measured, NoTranslucency, AxisIllDefined, CalibrationRequired };

inline const char* to_string(Finding f) {
  switch (f) {
    case Finding::Measured: return "measured";
    case Finding::NoTranslucency: return "no_translucency";
    case Finding::AxisIllDefined: return "axis_ill_defined";
    case Finding::CalibrationRequired: return "calibration_required";
  }
  return "unknown";
}

struct PipelineResult {
  Roi roi;
  DespeckleReport despeckle_report;
  LabelMap label_map;
  std::vector<double> cluster_means;
  EdgeMap edge_map;
  Mask mask;     // darkest-cluster mask over the ROI (empty if none)
  Mask nt_mask;  // selected NT blob over the ROI (all zero if none)
  std::optional<Blob> nt_blob;
  std::optional<NtMeasurement> measurement;
  std::optional<Classification> classification;
  Finding finding = Finding::Measured;
  std::string finding_detail;
  bool calibration_required = false;
  RgbImage overlay;  // full frame, NT blob in red
};

inline constexpr Rgb kOverlayColor{255, 0, 0};

namespace detail {

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const NoTranslucency&) {
    throw;
  } catch (const AxisIllDefined&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::vector<double> cluster_means(const LabelMap& lm, const Raster<std::uint8_t>& img) {
  std::vector<double> sum(static_cast<std::size_t>(lm.cluster_count), 0.0);
  std::vector<std::size_t> cnt(sum.size(), 0);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto l = static_cast<std::size_t>(lm.labels.data()[i]);
    sum[l] += img.data()[i];
    ++cnt[l];
  }
  for (std::size_t l = 0; l < sum.size(); ++l) {
    sum[l] = cnt[l] ? sum[l] / static_cast<double>(cnt[l]) : 0.0;
  }
  return sum;
}

inline Mask embed_mask(const Mask& roi_mask, const Roi& roi, int width, int height) {
  Mask full(width, height, 0);
  if (roi_mask.empty()) return full;
  for (int r = 0; r < roi.h; ++r) {
    for (int c = 0; c < roi.w; ++c) full(roi.y0 + r, roi.x0 + c) = roi_mask(r, c);
  }
  return full;
}

}  // namespace detail

inline PipelineResult run_pipeline(const GrayImage& img, const Roi& roi,
                                   const PipelineConfig& cfg) {
  detail::run_stage("config", [&] {
    cfg.validate();
    return 0;
  });
  detail::run_stage("roi", [&] {
    validate_roi(roi, img);
    return 0;
  });

  PipelineResult res;
  res.roi = roi;

  // Despeckling runs on the full frame so ROI edits never re-filter.
  auto [filtered, report] =
      detail::run_stage("despeckle", [&] { return despeckle(img, cfg.despeckle); });
  res.despeckle_report = std::move(report);

  const GrayImage roi_img = crop(filtered, roi);
  res.label_map = detail::run_stage("segment", [&] { return segment(roi_img, cfg.meanshift); });
  res.cluster_means = detail::cluster_means(res.label_map, roi_img);
  res.edge_map = detail::run_stage("edges", [&] {
    return canny(cluster_mean_image(res.label_map, roi_img), cfg.canny);
  });
  res.nt_mask = Mask(roi.w, roi.h, 0);

  const std::optional<double> mm = cfg.mm_per_px ? cfg.mm_per_px : img.mm_per_px();
  res.calibration_required = !mm.has_value();

  try {
    res.mask = detail::run_stage(
        "mask", [&] { return binarize(res.label_map, roi_img, cfg.fluid_merge_range); });

    // Contrast guard: the dark cluster must be markedly darker than the rest.
    double in_sum = 0.0;
    double out_sum = 0.0;
    std::size_t in_n = 0;
    for (std::size_t i = 0; i < roi_img.size(); ++i) {
      if (res.mask.data()[i]) {
        in_sum += roi_img.data()[i];
        ++in_n;
      } else {
        out_sum += roi_img.data()[i];
      }
    }
    const std::size_t out_n = roi_img.size() - in_n;
    if (in_n == 0 || out_n == 0) throw NoTranslucency("darkest cluster covers the whole ROI");
    const double in_mean = in_sum / static_cast<double>(in_n);
    const double out_mean = out_sum / static_cast<double>(out_n);
    if (in_mean > cfg.max_fluid_ratio * out_mean) {
      throw NoTranslucency("darkest cluster is not anechoic (mean " + std::to_string(in_mean) +
                           " vs surround " + std::to_string(out_mean) + ")");
    }

    const auto blobs = detail::run_stage("blobs", [&] {
      return connected_components(open_mask(res.mask, cfg.mask_open_radius));
    });
    res.nt_blob = select_nt_blob(blobs);
    for (const auto& p : res.nt_blob->pixels) res.nt_mask(p.row, p.col) = 1;
    const BlobAxis axis = blob_axis(*res.nt_blob);

    if (mm) {
      NtMeasurement m = detail::run_stage("thickness", [&] {
        return nt_thickness(*res.nt_blob, axis, mm, cfg.gestation_weeks, cfg.profile_window);
      });
      // Chord into full-frame coordinates.
      m.chord.first.row += roi.y0;
      m.chord.first.col += roi.x0;
      m.chord.second.row += roi.y0;
      m.chord.second.col += roi.x0;
      res.measurement = m;
      if (cfg.gestation_weeks) {
        res.classification =
            detail::run_stage("classify", [&] { return classify(*res.measurement, cfg.norms); });
      }
      res.finding = Finding::Measured;
    } else {
      res.finding = Finding::CalibrationRequired;
      res.finding_detail = "mm_per_px not supplied; segmentation only";
    }
  } catch (const NoTranslucency& e) {
    res.finding = Finding::NoTranslucency;
    res.finding_detail = e.what();
    res.nt_blob.reset();
    res.nt_mask = Mask(roi.w, roi.h, 0);
  } catch (const AxisIllDefined& e) {
    res.finding = Finding::AxisIllDefined;
    res.finding_detail = e.what();
  }

  res.overlay = overlay_mask(img, detail::embed_mask(res.nt_mask, roi, img.width(), img.height()),
                             kOverlayColor);
  return res;
}

}  // namespace ntscan
