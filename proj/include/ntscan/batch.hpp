#pragma once

// Manifest-driven batch runs with per-week cohort statistics.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ntscan/codec.hpp"
#include "ntscan/errors.hpp"
#include "ntscan/pipeline.hpp"
#include "ntscan/report.hpp"

namespace ntscan {

struct BatchItem {
  std::string id;
  std::filesystem::path image;
  Roi roi;
  std::optional<double> gestation_weeks;
  std::optional<double> mm_per_px;  // overrides config and file metadata
};

struct BatchFailure {
  std::string id;
  std::string image;
  std::string error;
};

struct BatchEntry {
  std::string id;
  std::string image;
  Json report;
  std::optional<NtMeasurement> measurement;
};

struct BatchResult {
  std::vector<BatchEntry> entries;
  std::vector<BatchFailure> failures;
  CohortStats cohort;
  std::size_t measured = 0;

  /// 0 when every item ran and something was measured, otherwise 2.
  int exit_code() const { return failures.empty() && measured > 0 ? 0 : 2; }
};

/// Manifest: {"images": [{"id", "image", "roi", "weeks", "mm_per_px"}]} or a
/// bare array of such objects. Image paths are relative to the manifest.
inline std::vector<BatchItem> manifest_from_json(const Json& j,
                                                 const std::filesystem::path& base_dir) {
  const Json* list = &j;
  if (j.is_object()) {
    detail::reject_unknown(j, "manifest", {"images"});
    if (!j.contains("images")) throw ConfigError("manifest: missing \"images\"");
    list = &j.at("images");
  }
  if (!list->is_array()) throw ConfigError("manifest: images must be an array");
  if (list->empty()) throw ConfigError("manifest: no images");
  std::vector<BatchItem> items;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const Json& e = (*list)[i];
    const std::string what = "manifest entry " + std::to_string(i);
    detail::require_object(e, what);
    detail::reject_unknown(e, what, {"id", "image", "roi", "weeks", "mm_per_px"});
    if (!e.contains("image")) throw ConfigError(what + ": missing image");
    if (!e.contains("roi")) throw ConfigError(what + ": missing roi");
    BatchItem item;
    std::string image;
    detail::read_field(e, "image", image, what);
    item.image = image;
    if (item.image.is_relative()) item.image = base_dir / item.image;
    item.id = std::filesystem::path(image).stem().string();
    detail::read_field(e, "id", item.id, what);
    item.roi = roi_from_json(e.at("roi"));
    detail::read_optional(e, "weeks", item.gestation_weeks, what);
    detail::read_optional(e, "mm_per_px", item.mm_per_px, what);
    for (const auto& prev : items) {
      if (prev.id == item.id) throw ConfigError(what + ": duplicate id \"" + item.id + "\"");
    }
    items.push_back(std::move(item));
  }
  return items;
}

inline std::vector<BatchItem> load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path), path.parent_path());
}

inline BatchResult batch_run(const std::vector<BatchItem>& items, const PipelineConfig& cfg,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  if (items.empty()) throw ConfigError("manifest: no images");
  BatchResult out;
  std::vector<NtMeasurement> measured;
  for (const auto& item : items) {
    try {
      const GrayImage img = load_image(item.image);
      PipelineConfig c = cfg;
      if (item.gestation_weeks) c.gestation_weeks = item.gestation_weeks;
      if (item.mm_per_px) c.mm_per_px = item.mm_per_px;
      const PipelineResult r = run_pipeline(img, item.roi, c);
      BatchEntry entry{item.id, item.image.string(), to_json(r), r.measurement};
      if (out_dir) {
        const auto dir = *out_dir / item.id;
        std::filesystem::create_directories(dir);
        const std::string text = dump_report(entry.report);
        write_file(dir / "report.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
        write_file(dir / "overlay.png", encode_png(r.overlay));
      }
      if (r.measurement) {
        ++out.measured;
        if (r.measurement->gestation_weeks) measured.push_back(*r.measurement);
      }
      out.entries.push_back(std::move(entry));
    } catch (const std::exception& e) {
      out.failures.push_back({item.id, item.image.string(), e.what()});
    }
  }
  out.cohort = aggregate_cohort(measured);
  return out;
}

inline Json to_json(const BatchResult& b) {
  Json entries = Json::array();
  for (const auto& e : b.entries) {
    entries.push_back(Json{{"id", e.id}, {"image", e.image}, {"report", e.report}});
  }
  Json failures = Json::array();
  for (const auto& f : b.failures) {
    failures.push_back(Json{{"id", f.id}, {"image", f.image}, {"error", f.error}});
  }
  return Json{
      {"schema_version", kReportSchemaVersion},
      {"processed", b.entries.size()},
      {"measured", b.measured},
      {"failed", b.failures.size()},
      {"cohort", to_json(b.cohort)},
      {"failures", failures},
      {"reports", entries},
  };
}

}  // namespace ntscan
