// ntscan: NT thickness measurement from the command line.
//
//   ntscan run     --image F --roi x,y,w,h [--mm-per-px V] [--weeks W] [--config C] [--out DIR]
//   ntscan batch   --manifest M [--config C] [--out DIR]
//   ntscan phantom [--spec S] [--seed N] --out DIR
//   ntscan serve   --bind HOST:PORT [--config C] [--persist DIR] [--ui-dir DIR]
//
// Exit codes: 0 success, 1 runtime failure, 2 partial batch failure,
// 3 configuration or usage error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ntscan/ntscan.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 3;

void write_text(const std::filesystem::path& path, const std::string& text) {
  ntscan::write_file(path,
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ntscan::PipelineConfig base_config(const std::string& config_path) {
  return config_path.empty() ? ntscan::PipelineConfig{} : ntscan::load_config(config_path);
}

int cmd_run(const std::string& image, const std::string& roi_text, std::optional<double> mm,
            std::optional<double> weeks, const std::string& config_path, const std::string& out) {
  ntscan::PipelineConfig cfg = base_config(config_path);
  if (mm) cfg.mm_per_px = mm;
  if (weeks) cfg.gestation_weeks = weeks;
  const ntscan::Roi roi = ntscan::parse_roi(roi_text);
  const ntscan::GrayImage img = ntscan::load_image(image);
  const ntscan::PipelineResult result = ntscan::run_pipeline(img, roi, cfg);
  const std::string report = ntscan::dump_report(ntscan::to_json(result));
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_text(std::filesystem::path(out) / "report.json", report);
    ntscan::write_file(std::filesystem::path(out) / "overlay.png",
                       ntscan::encode_png(result.overlay));
  }
  std::cout << report;
  return 0;
}

int cmd_batch(const std::string& manifest, const std::string& config_path, const std::string& out) {
  const ntscan::PipelineConfig cfg = base_config(config_path);
  const auto items = ntscan::load_manifest(manifest);
  std::optional<std::filesystem::path> out_dir;
  if (!out.empty()) out_dir = out;
  const ntscan::BatchResult result = ntscan::batch_run(items, cfg, out_dir);
  const std::string summary = ntscan::dump_report(ntscan::to_json(result));
  if (out_dir) write_text(*out_dir / "summary.json", summary);
  std::cout << summary;
  for (const auto& f : result.failures) std::cerr << "failed: " << f.id << ": " << f.error << "\n";
  return result.exit_code();
}

int cmd_phantom(const std::string& spec_path, std::optional<std::uint64_t> seed,
                std::optional<double> thickness, std::optional<double> angle,
                const std::string& out) {
  ntscan::PhantomSpec spec;
  if (!spec_path.empty()) spec = ntscan::phantom_spec_from_json(ntscan::read_json_file(spec_path));
  if (seed) spec.seed = *seed;
  if (thickness) spec.band_thickness_mm = *thickness;
  if (angle) spec.band_orientation_deg = *angle;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ntscan::ConfigError(std::string("phantom spec: ") + e.what());
  }
  const ntscan::Phantom ph = ntscan::generate_phantom(spec);
  ntscan::write_phantom_bundle(ph, spec, out);
  std::cout << "wrote " << out << " (truth " << ph.truth_thickness_mm << " mm)\n";
  return 0;
}

int cmd_serve(const std::string& bind, const std::string& config_path, const std::string& persist,
              const std::string& ui_dir) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ntscan::ConfigError("--bind must be HOST:PORT");
  const std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw ntscan::ConfigError("--bind port is not a number");
  }
  std::optional<std::filesystem::path> persist_dir;
  if (!persist.empty()) persist_dir = persist;
  std::optional<std::filesystem::path> ui;
  if (!ui_dir.empty()) ui = ui_dir;

  ntscan::SessionService service(base_config(config_path), persist_dir);
  httplib::Server server;
  service.mount(server, ui);
  std::cerr << "ntscan: listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "ntscan: cannot bind " << bind << "\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nuchal translucency thickness measurement"};
  app.require_subcommand(1);

  std::string image, roi, config, out, manifest, spec, bind = "127.0.0.1:8080", persist, ui_dir;
  std::optional<double> mm, weeks, thickness, angle;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Measure one image");
  run->add_option("--image", image, "PGM or PNG frame")->required();
  run->add_option("--roi", roi, "x,y,w,h in pixels")->required();
  run->add_option("--mm-per-px", mm, "Pixel spacing in mm");
  run->add_option("--weeks", weeks, "Gestational age in weeks");
  run->add_option("--config", config, "Pipeline config JSON");
  run->add_option("--out", out, "Directory for report.json and overlay.png");

  auto* batch = app.add_subcommand("batch", "Measure every image in a manifest");
  batch->add_option("--manifest", manifest, "Manifest JSON")->required();
  batch->add_option("--config", config, "Pipeline config JSON");
  batch->add_option("--out", out, "Directory for per-image reports and summary.json");

  auto* phantom = app.add_subcommand("phantom", "Write a synthetic phantom bundle");
  phantom->add_option("--spec", spec, "Phantom spec JSON");
  phantom->add_option("--seed", seed, "Speckle seed (overrides --spec)");
  phantom->add_option("--thickness-mm", thickness, "Band thickness (overrides --spec)");
  phantom->add_option("--angle", angle, "Band orientation in degrees (overrides --spec)");
  phantom->add_option("--out", out, "Output directory")->required();

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--bind", bind, "HOST:PORT")->capture_default_str();
  serve->add_option("--config", config, "Pipeline config JSON");
  serve->add_option("--persist", persist, "Directory for accepted-session snapshots");
  serve->add_option("--ui-dir", ui_dir, "Static files served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(image, roi, mm, weeks, config, out);
    if (*batch) return cmd_batch(manifest, config, out);
    if (*phantom) return cmd_phantom(spec, seed, thickness, angle, out);
    if (*serve) return cmd_serve(bind, config, persist, ui_dir);
  } catch (const ntscan::ConfigError& e) {
    std::cerr << "ntscan: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ntscan::StageError& e) {
    std::cerr << "ntscan: stage " << e.stage() << " failed: " << e.what() << "\n";
    return e.stage() == "config" || e.stage() == "roi" ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "ntscan: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
