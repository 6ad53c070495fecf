#pragma once

// HTTP session service for the operator loop: upload a frame, set the ROI,
// run, review the overlay, accept.
//
//   POST /sessions                 image bytes (raw or multipart "image") -> 201 {id}
//   GET  /sessions/{id}            session state
//   PUT  /sessions/{id}/roi        {x0, y0, w, h}
//   POST /sessions/{id}/run        {mm_per_px?, weeks?} -> report
//   GET  /sessions/{id}/overlay.png
//   GET  /sessions/{id}/result     report
//   POST /sessions/{id}/accept
//
// Sessions live in memory. Requests on one session are serialized by its
// mutex; distinct sessions run concurrently.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include <httplib.h>

#include "ntscan/codec.hpp"
#include "ntscan/errors.hpp"
#include "ntscan/pipeline.hpp"
#include "ntscan/report.hpp"

namespace ntscan {

enum class SessionStatus { AwaitingRoi, Ran, Accepted };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingRoi: return "awaiting-roi";
    case SessionStatus::Ran: return "ran";
    case SessionStatus::Accepted: return "accepted";
  }
  return "unknown";
}

struct Session {
  std::string id;
  GrayImage image;
  std::optional<Roi> roi;
  std::optional<PipelineResult> result;
  Json report;             // cached to_json(*result)
  Bytes overlay_png;       // cached encode_png(result->overlay)
  bool result_stale = false;  // ROI changed since the last run
  SessionStatus status = SessionStatus::AwaitingRoi;
  std::mutex mutex;
};

inline Json session_json(const Session& s) {
  return Json{
      {"id", s.id},
      {"status", to_string(s.status)},
      {"width", s.image.width()},
      {"height", s.image.height()},
      {"mm_per_px", detail::optional_json(s.image.mm_per_px())},
      {"roi", s.roi ? to_json(*s.roi) : Json(nullptr)},
      {"has_result", s.result.has_value()},
      {"result_stale", s.result_stale},
      {"thickness_mm", s.result && s.result->measurement ? Json(s.result->measurement->thickness_mm)
                                                         : Json(nullptr)},
  };
}

class SessionService {
 public:
  explicit SessionService(PipelineConfig base,
                          std::optional<std::filesystem::path> persist_dir = std::nullopt)
      : base_(std::move(base)), persist_dir_(std::move(persist_dir)), rng_(std::random_device{}()) {
    base_.validate();
  }

  /// Registers the API routes; `ui_dir`, if given, is served at "/".
  void mount(httplib::Server& server, const std::optional<std::filesystem::path>& ui_dir = {}) {
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      create(req, res);
    });
    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Session& s) { send_json(res, 200, session_json(s)); });
    });
    server.Put(R"(/sessions/([^/]+)/roi)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s) { set_roi(s, req, res); });
               });
    server.Post(R"(/sessions/([^/]+)/run)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  with_session(req, res, [&](Session& s) { run(s, req, res); });
                });
    server.Get(R"(/sessions/([^/]+)/overlay\.png)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s) {
                   if (!s.result) return send_error(res, 404, "no result yet");
                   res.status = 200;
                   res.set_content(reinterpret_cast<const char*>(s.overlay_png.data()),
                                   s.overlay_png.size(), "image/png");
                 });
               });
    server.Get(R"(/sessions/([^/]+)/result)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 with_session(req, res, [&](Session& s) {
                   if (!s.result) return send_error(res, 404, "no result yet");
                   send_json(res, 200, s.report);
                 });
               });
    server.Post(R"(/sessions/([^/]+)/accept)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  with_session(req, res, [&](Session& s) { accept(s, res); });
                });
    if (ui_dir) server.set_mount_point("/", ui_dir->string());
  }

  std::size_t session_count() const {
    std::lock_guard lock(store_mutex_);
    return sessions_.size();
  }

 private:
  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, Json{{"error", msg}});
  }

  template <typename F>
  void with_session(const httplib::Request& req, httplib::Response& res, F&& f) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(store_mutex_);
      const auto it = sessions_.find(req.matches[1].str());
      if (it != sessions_.end()) s = it->second;
    }
    if (!s) return send_error(res, 404, "unknown session");
    std::lock_guard lock(s->mutex);
    f(*s);
  }

  std::string new_id() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id(16, '0');
    for (auto& ch : id) ch = kHex[rng_() & 0xF];
    return id;
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    std::string body = req.body;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) {
        return send_error(res, 400, "multipart upload needs an \"image\" part");
      }
      body = req.get_file_value("image").content;
    }
    if (body.empty()) return send_error(res, 400, "empty upload");
    auto s = std::make_shared<Session>();
    try {
      s->image = decode_image(
          std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
    } catch (const FormatError& e) {
      return send_error(res, 415, e.what());
    }
    {
      std::lock_guard lock(store_mutex_);
      do {
        s->id = new_id();
      } while (sessions_.contains(s->id));
      sessions_[s->id] = s;
    }
    send_json(res, 201, Json{{"id", s->id}, {"status", to_string(s->status)}});
  }

  static std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
    if (req.body.empty()) return Json::object();
    try {
      Json j = Json::parse(req.body);
      if (!j.is_object()) {
        send_error(res, 400, "body must be a JSON object");
        return std::nullopt;
      }
      return j;
    } catch (const Json::parse_error& e) {
      send_error(res, 400, std::string("invalid JSON: ") + e.what());
      return std::nullopt;
    }
  }

  void set_roi(Session& s, const httplib::Request& req, httplib::Response& res) {
    if (s.status == SessionStatus::Accepted) {
      return send_error(res, 409, "session already accepted");
    }
    const auto body = parse_body(req, res);
    if (!body) return;
    Roi roi;
    try {
      roi = roi_from_json(*body);
      validate_roi(roi, s.image);
    } catch (const std::exception& e) {
      return send_error(res, 422, e.what());
    }
    s.roi = roi;
    s.result_stale = s.result.has_value();
    send_json(res, 200, session_json(s));
  }

  void run(Session& s, const httplib::Request& req, httplib::Response& res) {
    if (s.status == SessionStatus::Accepted) {
      return send_error(res, 409, "session already accepted");
    }
    if (!s.roi) return send_error(res, 409, "set an ROI before running");
    const auto body = parse_body(req, res);
    if (!body) return;
    PipelineConfig cfg = base_;
    try {
      detail::reject_unknown(*body, "run", {"mm_per_px", "weeks"});
      detail::read_optional(*body, "mm_per_px", cfg.mm_per_px, "run");
      detail::read_optional(*body, "weeks", cfg.gestation_weeks, "run");
    } catch (const ConfigError& e) {
      return send_error(res, 400, e.what());
    }
    try {
      PipelineResult r = run_pipeline(s.image, *s.roi, cfg);
      s.report = to_json(r);
      s.overlay_png = encode_png(r.overlay);
      s.result = std::move(r);
    } catch (const StageError& e) {
      return send_json(res, 422, Json{{"error", e.what()}, {"stage", e.stage()}});
    } catch (const std::exception& e) {
      return send_error(res, 500, e.what());
    }
    s.result_stale = false;
    s.status = SessionStatus::Ran;
    send_json(res, 200, s.report);
  }

  void accept(Session& s, httplib::Response& res) {
    if (s.status == SessionStatus::Accepted) {
      return send_error(res, 409, "session already accepted");
    }
    if (s.status != SessionStatus::Ran) return send_error(res, 409, "run the pipeline first");
    if (s.result_stale) return send_error(res, 409, "ROI changed since the last run");
    if (persist_dir_) {
      try {
        const auto dir = *persist_dir_ / s.id;
        std::filesystem::create_directories(dir);
        Json snap = session_json(s);
        snap["status"] = to_string(SessionStatus::Accepted);
        snap["report"] = s.report;
        const std::string text = dump_report(snap);
        write_file(dir / "session.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
        write_file(dir / "overlay.png", s.overlay_png);
      } catch (const std::exception& e) {
        return send_error(res, 500, std::string("persisting session failed: ") + e.what());
      }
    }
    s.status = SessionStatus::Accepted;
    send_json(res, 200, session_json(s));
  }

  PipelineConfig base_;
  std::optional<std::filesystem::path> persist_dir_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 rng_;  // guarded by store_mutex_
};

}  // namespace ntscan
