#pragma once

// JSON for configs, phantom specs, norm tables, pipeline reports and cohort
// statistics. Field names are snake_case and mirror the C++ members.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ntscan/codec.hpp"
#include "ntscan/errors.hpp"
#include "ntscan/phantom.hpp"
#include "ntscan/pipeline.hpp"

namespace ntscan {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

namespace detail {

inline void require_object(const Json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
}

inline void reject_unknown(const Json& j, const std::string& what,
                           std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(what + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
void read_field(const Json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(what + "." + key + " has the wrong type");
  }
}

template <typename T>
void read_optional(const Json& j, const char* key, std::optional<T>& out, const std::string& what) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read_field(j, key, v, what);
  out = v;
}

inline void read_intensity(const Json& j, const char* key, std::uint8_t& out,
                           const std::string& what) {
  if (!j.contains(key)) return;
  int v = 0;
  read_field(j, key, v, what);
  if (v < 0 || v > 255) throw ConfigError(what + "." + key + " must lie in [0, 255]");
  out = static_cast<std::uint8_t>(v);
}

inline Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON (" + e.what() + ")");
  }
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json point_json(const Point2& p) { return Json{{"row", p.row}, {"col", p.col}}; }

}  // namespace detail

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return detail::parse_json_text(ss.str(), path.string());
}

// ---- parameters ---------------------------------------------------------

inline Json to_json(const Roi& r) {
  return Json{{"x0", r.x0}, {"y0", r.y0}, {"w", r.w}, {"h", r.h}};
}

inline Roi roi_from_json(const Json& j) {
  if (j.is_array()) {
    if (j.size() != 4) throw ConfigError("roi array must hold x0, y0, w, h");
    try {
      return Roi{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    } catch (const Json::exception&) {
      throw ConfigError("roi entries must be integers");
    }
  }
  detail::require_object(j, "roi");
  detail::reject_unknown(j, "roi", {"x0", "y0", "w", "h"});
  for (const char* k : {"x0", "y0", "w", "h"}) {
    if (!j.contains(k)) throw ConfigError(std::string("roi: missing ") + k);
  }
  Roi r;
  detail::read_field(j, "x0", r.x0, "roi");
  detail::read_field(j, "y0", r.y0, "roi");
  detail::read_field(j, "w", r.w, "roi");
  detail::read_field(j, "h", r.h, "roi");
  return r;
}

/// Parses "x,y,w,h".
inline Roi parse_roi(const std::string& text) {
  Roi r;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  if (!(in >> r.x0 >> c1 >> r.y0 >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' ||
      c3 != ',' || !(in >> std::ws).eof()) {
    throw ConfigError("roi must be x,y,w,h (got \"" + text + "\")");
  }
  return r;
}

inline Json to_json(const NormTable& t) {
  Json weeks = Json::object();
  for (const auto& [w, n] : t.weeks) {
    weeks[std::to_string(w)] = Json{{"mean_mm", n.mean_mm}, {"sd_mm", n.sd_mm}};
  }
  return Json{{"cutoff_mm", t.cutoff_mm}, {"sd_multiplier", t.sd_multiplier}, {"weeks", weeks}};
}

inline NormTable norm_table_from_json(const Json& j) {
  detail::require_object(j, "norm table");
  detail::reject_unknown(j, "norm table", {"cutoff_mm", "sd_multiplier", "weeks"});
  NormTable t = default_norm_table();
  detail::read_field(j, "cutoff_mm", t.cutoff_mm, "norm table");
  detail::read_field(j, "sd_multiplier", t.sd_multiplier, "norm table");
  if (j.contains("weeks")) {
    const Json& w = j.at("weeks");
    detail::require_object(w, "norm table weeks");
    t.weeks.clear();
    for (auto it = w.begin(); it != w.end(); ++it) {
      int week = 0;
      try {
        std::size_t used = 0;
        week = std::stoi(it.key(), &used);
        if (used != it.key().size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("norm table week key \"" + it.key() + "\" is not an integer");
      }
      const std::string what = "norm table week " + it.key();
      detail::require_object(it.value(), what);
      detail::reject_unknown(it.value(), what, {"mean_mm", "sd_mm"});
      WeekNorm n;
      detail::read_field(it.value(), "mean_mm", n.mean_mm, what);
      detail::read_field(it.value(), "sd_mm", n.sd_mm, what);
      t.weeks[week] = n;
    }
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

/// Effective configuration; a norm table loaded from a file is inlined.
inline Json to_json(const PipelineConfig& c) {
  return Json{
      {"despeckle",
       {{"window", c.despeckle.window},
        {"threshold", c.despeckle.threshold},
        {"max_iters", c.despeckle.max_iters}}},
      {"meanshift",
       {{"h_s", c.meanshift.h_s},
        {"h_r", c.meanshift.h_r},
        {"tol", c.meanshift.tol},
        {"max_iter", c.meanshift.max_iter},
        {"link_radius", c.meanshift.link_radius},
        {"min_region", c.meanshift.min_region}}},
      {"canny",
       {{"sigma", c.canny.sigma},
        {"t_low", c.canny.t_low},
        {"t_high", c.canny.t_high},
        {"relative", c.canny.relative}}},
      {"mm_per_px", detail::optional_json(c.mm_per_px)},
      {"gestation_weeks", detail::optional_json(c.gestation_weeks)},
      {"norm_table", to_json(c.norms)},
      {"max_fluid_ratio", c.max_fluid_ratio},
      {"fluid_merge_range", c.fluid_merge_range},
      {"mask_open_radius", c.mask_open_radius},
      {"profile_window", c.profile_window},
  };
}

/// Missing keys keep their defaults; unknown keys are errors. A relative
/// norm_table_path resolves against base_dir.
inline PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  detail::require_object(j, "config");
  detail::reject_unknown(j, "config",
                         {"despeckle", "meanshift", "canny", "mm_per_px", "gestation_weeks",
                          "norm_table_path", "norm_table", "max_fluid_ratio", "fluid_merge_range",
                          "mask_open_radius", "profile_window"});
  PipelineConfig c;
  if (j.contains("despeckle")) {
    const Json& d = j.at("despeckle");
    detail::require_object(d, "despeckle");
    detail::reject_unknown(d, "despeckle", {"window", "threshold", "max_iters"});
    detail::read_field(d, "window", c.despeckle.window, "despeckle");
    detail::read_field(d, "threshold", c.despeckle.threshold, "despeckle");
    detail::read_field(d, "max_iters", c.despeckle.max_iters, "despeckle");
  }
  if (j.contains("meanshift")) {
    const Json& m = j.at("meanshift");
    detail::require_object(m, "meanshift");
    detail::reject_unknown(m, "meanshift",
                           {"h_s", "h_r", "tol", "max_iter", "link_radius", "min_region"});
    detail::read_field(m, "h_s", c.meanshift.h_s, "meanshift");
    detail::read_field(m, "h_r", c.meanshift.h_r, "meanshift");
    detail::read_field(m, "tol", c.meanshift.tol, "meanshift");
    detail::read_field(m, "max_iter", c.meanshift.max_iter, "meanshift");
    detail::read_field(m, "link_radius", c.meanshift.link_radius, "meanshift");
    detail::read_field(m, "min_region", c.meanshift.min_region, "meanshift");
  }
  if (j.contains("canny")) {
    const Json& k = j.at("canny");
    detail::require_object(k, "canny");
    detail::reject_unknown(k, "canny", {"sigma", "t_low", "t_high", "relative"});
    detail::read_field(k, "sigma", c.canny.sigma, "canny");
    detail::read_field(k, "t_low", c.canny.t_low, "canny");
    detail::read_field(k, "t_high", c.canny.t_high, "canny");
    detail::read_field(k, "relative", c.canny.relative, "canny");
  }
  detail::read_optional(j, "mm_per_px", c.mm_per_px, "config");
  detail::read_optional(j, "gestation_weeks", c.gestation_weeks, "config");
  detail::read_optional(j, "norm_table_path", c.norm_table_path, "config");
  detail::read_field(j, "max_fluid_ratio", c.max_fluid_ratio, "config");
  detail::read_field(j, "fluid_merge_range", c.fluid_merge_range, "config");
  detail::read_field(j, "mask_open_radius", c.mask_open_radius, "config");
  detail::read_field(j, "profile_window", c.profile_window, "config");
  if (j.contains("norm_table") && c.norm_table_path) {
    throw ConfigError("config: give either norm_table or norm_table_path, not both");
  }
  if (j.contains("norm_table")) c.norms = norm_table_from_json(j.at("norm_table"));
  if (c.norm_table_path) {
    std::filesystem::path p = *c.norm_table_path;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    c.norms = norm_table_from_json(read_json_file(p));
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

inline Json to_json(const PhantomSpec& s) {
  return Json{
      {"width", s.width},
      {"height", s.height},
      {"mm_per_px", s.mm_per_px},
      {"band_thickness_mm", s.band_thickness_mm},
      {"band_orientation_deg", s.band_orientation_deg},
      {"band_curvature_radius_px", detail::optional_json(s.band_curvature_radius_px)},
      {"skin_thickness_px", s.skin_thickness_px},
      {"tissue_intensity", s.tissue_intensity},
      {"fluid_intensity", s.fluid_intensity},
      {"skin_intensity", s.skin_intensity},
      {"speckle_looks", s.speckle_looks},
      {"seed", s.seed},
  };
}

inline PhantomSpec phantom_spec_from_json(const Json& j) {
  detail::require_object(j, "phantom spec");
  detail::reject_unknown(j, "phantom spec",
                         {"width", "height", "mm_per_px", "band_thickness_mm",
                          "band_orientation_deg", "band_curvature_radius_px", "skin_thickness_px",
                          "tissue_intensity", "fluid_intensity", "skin_intensity",
                          "speckle_looks", "seed"});
  PhantomSpec s;
  const std::string what = "phantom spec";
  detail::read_field(j, "width", s.width, what);
  detail::read_field(j, "height", s.height, what);
  detail::read_field(j, "mm_per_px", s.mm_per_px, what);
  detail::read_field(j, "band_thickness_mm", s.band_thickness_mm, what);
  detail::read_field(j, "band_orientation_deg", s.band_orientation_deg, what);
  detail::read_optional(j, "band_curvature_radius_px", s.band_curvature_radius_px, what);
  detail::read_field(j, "skin_thickness_px", s.skin_thickness_px, what);
  detail::read_intensity(j, "tissue_intensity", s.tissue_intensity, what);
  detail::read_intensity(j, "fluid_intensity", s.fluid_intensity, what);
  detail::read_intensity(j, "skin_intensity", s.skin_intensity, what);
  detail::read_field(j, "speckle_looks", s.speckle_looks, what);
  detail::read_field(j, "seed", s.seed, what);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("phantom spec: ") + e.what());
  }
  return s;
}

/// Writes image.pgm, clean.pgm, truth.pgm (0/255) and truth.json.
inline void write_phantom_bundle(const Phantom& ph, const PhantomSpec& spec,
                                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "image.pgm", encode_pgm(ph.image));
  write_file(dir / "clean.pgm", encode_pgm(ph.clean));
  Raster<std::uint8_t> truth(ph.truth_mask.width(), ph.truth_mask.height(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth.data()[i] = ph.truth_mask.data()[i] ? 255 : 0;
  }
  write_file(dir / "truth.pgm", encode_pgm(truth));
  const Json truth_json{
      {"truth_thickness_mm", ph.truth_thickness_mm},
      {"truth_thickness_px", spec.band_thickness_px()},
      {"truth_mask_px", popcount(ph.truth_mask)},
      {"saturation_fraction", ph.saturation_fraction},
      {"spec", to_json(spec)},
  };
  const std::string text = truth_json.dump(2) + "\n";
  write_file(dir / "truth.json",
             std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- results ------------------------------------------------------------

inline Json to_json(const NtMeasurement& m) {
  return Json{
      {"thickness_mm", m.thickness_mm},
      {"thickness_px", m.thickness_px},
      {"chord",
       Json::array({detail::point_json(m.chord.first), detail::point_json(m.chord.second)})},
      {"blob_area_px", m.blob_area_px},
      {"gestation_weeks", detail::optional_json(m.gestation_weeks)},
      {"mm_per_px", m.mm_per_px},
      {"axis_source", "blob_principal_axis"},
  };
}

inline Json to_json(const Classification& c) {
  return Json{
      {"status", to_string(c.status)},
      {"rule_fired", c.rule_fired},
      {"cutoff_mm", c.cutoff_mm},
      {"week_threshold_mm", detail::optional_json(c.week_threshold_mm)},
  };
}

inline Json to_json(const DespeckleReport& r) {
  return Json{
      {"iterations_run", r.iterations_run},
      {"flags_per_iteration", r.flags_per_iteration},
      {"terminated_by", to_string(r.terminated_by)},
  };
}

inline Json to_json(const CohortStats& s) {
  Json weeks = Json::array();
  for (const auto& w : s.weeks) {
    weeks.push_back(Json{
        {"week", w.week},
        {"n", w.n},
        {"mean_mm", w.mean_mm},
        {"sd_mm", w.sd_defined ? Json(w.sd_mm) : Json(nullptr)},
        {"variance_mm2", w.sd_defined ? Json(w.variance_mm2) : Json(nullptr)},
        {"sd_defined", w.sd_defined},
    });
  }
  return Json{{"weeks", weeks}};
}

/// The result report served at /sessions/{id}/result and written by `run`.
inline Json to_json(const PipelineResult& r) {
  Json blob = nullptr;
  if (r.nt_blob) {
    const auto& b = *r.nt_blob;
    blob = Json{
        {"area_px", b.area},
        {"centroid",
         detail::point_json(Point2{b.centroid.row + r.roi.y0, b.centroid.col + r.roi.x0})},
        {"bbox",
         {{"min_row", b.bbox.min_row + r.roi.y0},
          {"min_col", b.bbox.min_col + r.roi.x0},
          {"max_row", b.bbox.max_row + r.roi.y0},
          {"max_col", b.bbox.max_col + r.roi.x0}}},
        {"elongation", b.elongation()},
    };
  }
  return Json{
      {"schema_version", kReportSchemaVersion},
      {"roi", to_json(r.roi)},
      {"finding", to_string(r.finding)},
      {"finding_detail", r.finding_detail},
      {"calibration_required", r.calibration_required},
      {"thickness_mm", r.measurement ? Json(r.measurement->thickness_mm) : Json(nullptr)},
      {"measurement", r.measurement ? to_json(*r.measurement) : Json(nullptr)},
      {"classification", r.classification ? to_json(*r.classification) : Json(nullptr)},
      {"stages",
       {{"despeckle", to_json(r.despeckle_report)},
        {"segmentation",
         {{"cluster_count", r.label_map.cluster_count},
          {"cluster_sizes", r.label_map.cluster_sizes()},
          {"cluster_means", r.cluster_means},
          {"pruning_degenerate", r.label_map.pruning_degenerate},
          {"trajectories_capped", r.label_map.trajectories_capped}}},
        {"edges",
         {{"edge_count", r.edge_map.edge_count()},
          {"low", r.edge_map.low},
          {"high", r.edge_map.high}}},
        {"mask", {{"fluid_px", popcount(r.mask)}, {"nt_blob_px", popcount(r.nt_mask)}}},
        {"nt_blob", blob}}},
  };
}

inline std::string dump_report(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace ntscan
