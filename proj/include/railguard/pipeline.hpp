#pragma once

// Runtime core: per-frame track centerline, proximity classification against
// a metric threshold, and the debounced alert state machine.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "railguard/calibration.hpp"
#include "railguard/geometry.hpp"
#include "railguard/ingest.hpp"

namespace railguard {

enum class DistanceMode { center_to_center, center_to_polyline };

struct PipelineConfig {
  double threshold_m = 1.0;
  double min_track_confidence = 0.25;
  double min_object_confidence = 0.25;
  int debounce_frames = 3;
  int release_frames = 5;
  double hysteresis_m = 0.2;
  DistanceMode distance_mode = DistanceMode::center_to_center;

  void validate() const {
    if (!(threshold_m > 0.0) || !std::isfinite(threshold_m)) {
      throw std::invalid_argument("threshold_m must be > 0");
    }
    if (!(min_track_confidence >= 0.0 && min_track_confidence <= 1.0) ||
        !(min_object_confidence >= 0.0 && min_object_confidence <= 1.0)) {
      throw std::invalid_argument("confidence floors must be in [0,1]");
    }
    if (debounce_frames < 1) throw std::invalid_argument("debounce_frames must be >= 1");
    if (release_frames < 1) throw std::invalid_argument("release_frames must be >= 1");
    if (!(hysteresis_m >= 0.0) || !std::isfinite(hysteresis_m)) {
      throw std::invalid_argument("hysteresis_m must be >= 0");
    }
  }
};

struct ProximityStatus {
  std::uint64_t frame_index = 0;
  std::uint64_t timestamp_ms = 0;
  std::string object_key;
  ClassLabel class_label = ClassLabel::person;
  BoundingBox bbox;
  Point center;
  std::optional<double> distance_m;  // nullopt = Unknown
  bool breach = false;
};

enum class AlertKind { raised, cleared };

inline std::string_view to_string(AlertKind k) noexcept {
  return k == AlertKind::raised ? "raised" : "cleared";
}

struct AlertEvent {
  AlertKind kind = AlertKind::raised;
  std::string object_key;
  std::uint64_t frame_index = 0;
  std::uint64_t timestamp_ms = 0;
  std::optional<double> distance_m;

  friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

struct ObjectAlertState {
  int consecutive_breach_count = 0;
  int consecutive_clear_count = 0;
  bool active = false;
};

/// Per object_key alert state. Keys with no pending count and no active alert
/// are dropped, so memory is bounded by the number of live objects.
using AlertState = std::map<std::string, ObjectAlertState>;

struct FrameDiagnostics {
  bool track_missing = false;
  std::size_t horizon_failures = 0;
};

// ---------------------------------------------------------------------------

/// Centers of confident track boxes, sorted far-to-near (ascending image y).
inline std::optional<Polyline> build_track_centerline(const FrameRecord& frame,
                                                      const PipelineConfig& cfg) {
  std::vector<Point> centers;
  for (const auto& d : frame.detections) {
    if (d.class_label == ClassLabel::track && d.confidence >= cfg.min_track_confidence) {
      centers.push_back(bbox_center(d.bbox));
    }
  }
  if (centers.empty()) return std::nullopt;
  std::stable_sort(centers.begin(), centers.end(), [](const Point& a, const Point& b) {
    return a.y < b.y || (a.y == b.y && a.x < b.x);
  });
  return Polyline(std::move(centers));
}

inline std::string make_object_key(ClassLabel c, std::size_t rank) {
  return std::string(to_string(c)) + "#" + std::to_string(rank);
}

/// Distance of every confident person/object detection to the track, in meters.
/// Objects are keyed "<class>#<rank>" where rank orders same-class detections
/// by center x (then center y, then confidence descending).
inline std::vector<ProximityStatus> classify_frame(const FrameRecord& frame, const Calibration& cal,
                                                   const PipelineConfig& cfg,
                                                   FrameDiagnostics* diag = nullptr) {
  FrameDiagnostics local;
  FrameDiagnostics& dg = diag ? *diag : local;

  // Ground-plane reference geometry for this frame.
  std::vector<Point> ground_refs;
  const auto centerline = build_track_centerline(frame, cfg);
  if (centerline) {
    for (const auto& v : centerline->vertices()) {
      try {
        ground_refs.push_back(cal.project_to_ground(v));
      } catch (const HorizonError&) {
        ++dg.horizon_failures;
      }
    }
  } else {
    dg.track_missing = true;
  }
  std::optional<Polyline> ground_line;
  if (!ground_refs.empty()) ground_line.emplace(ground_refs);

  std::vector<ProximityStatus> out;
  for (ClassLabel cls : {ClassLabel::person, ClassLabel::object}) {
    std::vector<const Detection*> members;
    for (const auto& d : frame.detections) {
      if (d.class_label == cls && d.confidence >= cfg.min_object_confidence) members.push_back(&d);
    }
    std::stable_sort(members.begin(), members.end(), [](const Detection* a, const Detection* b) {
      const Point ca = bbox_center(a->bbox);
      const Point cb = bbox_center(b->bbox);
      if (ca.x != cb.x) return ca.x < cb.x;
      if (ca.y != cb.y) return ca.y < cb.y;
      return a->confidence > b->confidence;
    });

    for (std::size_t rank = 0; rank < members.size(); ++rank) {
      const Detection& d = *members[rank];
      ProximityStatus s;
      s.frame_index = frame.frame_index;
      s.timestamp_ms = frame.timestamp_ms;
      s.object_key = make_object_key(cls, rank);
      s.class_label = cls;
      s.bbox = d.bbox;
      s.center = bbox_center(d.bbox);
      if (ground_line) {
        try {
          const Point g = cal.project_to_ground(s.center);
          if (cfg.distance_mode == DistanceMode::center_to_polyline) {
            s.distance_m = point_to_polyline_distance(g, *ground_line);
          } else {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& r : ground_refs) best = std::min(best, euclidean_distance(g, r));
            s.distance_m = best;
          }
        } catch (const HorizonError&) {
          ++dg.horizon_failures;
        }
      }
      s.breach = s.distance_m.has_value() && *s.distance_m <= cfg.threshold_m;
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Advances the per-object alert machine by one frame.
///
/// A breach increments the breach streak; Raised fires once the streak reaches
/// debounce_frames. An active alert clears after release_frames consecutive
/// observations farther than threshold + hysteresis (or with the object absent).
/// Inside the hysteresis band both streaks reset. An Unknown distance resets the
/// breach streak and leaves the clear streak untouched.
inline std::vector<AlertEvent> step_alert_state(AlertState& state,
                                                const std::vector<ProximityStatus>& statuses,
                                                const PipelineConfig& cfg, std::uint64_t frame_index,
                                                std::uint64_t timestamp_ms) {
  std::map<std::string, const ProximityStatus*> seen;
  for (const auto& s : statuses) seen.emplace(s.object_key, &s);
  for (const auto& [key, _] : seen) state.try_emplace(key);

  std::vector<AlertEvent> events;
  for (auto it = state.begin(); it != state.end();) {
    auto& [key, st] = *it;
    auto obs = seen.find(key);
    const ProximityStatus* s = obs == seen.end() ? nullptr : obs->second;
    std::optional<double> dist = s ? s->distance_m : std::nullopt;

    if (s && s->breach) {
      ++st.consecutive_breach_count;
      st.consecutive_clear_count = 0;
      if (!st.active && st.consecutive_breach_count >= cfg.debounce_frames) {
        st.active = true;
        events.push_back({AlertKind::raised, key, frame_index, timestamp_ms, dist});
      }
    } else {
      st.consecutive_breach_count = 0;
      const bool far = !s || (dist && *dist > cfg.threshold_m + cfg.hysteresis_m);
      if (st.active) {
        if (far) {
          if (++st.consecutive_clear_count >= cfg.release_frames) {
            st.active = false;
            st.consecutive_clear_count = 0;
            events.push_back({AlertKind::cleared, key, frame_index, timestamp_ms, dist});
          }
        } else if (dist) {
          st.consecutive_clear_count = 0;  // hysteresis band
        }
      }
    }

    if (!st.active && st.consecutive_breach_count == 0) {
      it = state.erase(it);
    } else {
      ++it;
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Stream driver.

struct StageTiming {
  std::chrono::nanoseconds centerline{0};
  std::chrono::nanoseconds classify{0};
  std::chrono::nanoseconds alert{0};
};

struct RunSummary {
  std::uint64_t frames = 0;
  std::uint64_t detections = 0;
  std::uint64_t statuses = 0;
  std::uint64_t breaches = 0;
  std::uint64_t unknown_distance = 0;
  std::uint64_t frames_without_track = 0;
  std::uint64_t horizon_failures = 0;
  std::uint64_t raised = 0;
  std::uint64_t cleared = 0;
  StageTiming timing;

  std::uint64_t alerts() const noexcept { return raised + cleared; }
};

struct FrameResult {
  std::vector<ProximityStatus> statuses;
  std::vector<AlertEvent> events;
  std::optional<Polyline> centerline;
};

/// One stream's worth of sequential state. Not thread-safe; one per stream.
class StreamProcessor {
 public:
  StreamProcessor(Calibration cal, PipelineConfig cfg) : cal_(std::move(cal)), cfg_(cfg) {
    cfg_.validate();
  }

  FrameResult process(const FrameRecord& frame) {
    using clock = std::chrono::steady_clock;
    FrameResult r;
    FrameDiagnostics diag;

    auto t0 = clock::now();
    r.centerline = build_track_centerline(frame, cfg_);
    auto t1 = clock::now();
    r.statuses = classify_frame(frame, cal_, cfg_, &diag);
    auto t2 = clock::now();
    r.events = step_alert_state(state_, r.statuses, cfg_, frame.frame_index, frame.timestamp_ms);
    auto t3 = clock::now();

    summary_.timing.centerline += t1 - t0;
    summary_.timing.classify += t2 - t1;
    summary_.timing.alert += t3 - t2;
    ++summary_.frames;
    summary_.detections += frame.detections.size();
    summary_.statuses += r.statuses.size();
    if (diag.track_missing) ++summary_.frames_without_track;
    summary_.horizon_failures += diag.horizon_failures;
    for (const auto& s : r.statuses) {
      if (s.breach) ++summary_.breaches;
      if (!s.distance_m) ++summary_.unknown_distance;
    }
    for (const auto& e : r.events) {
      (e.kind == AlertKind::raised ? summary_.raised : summary_.cleared)++;
    }
    return r;
  }

  const RunSummary& summary() const noexcept { return summary_; }
  const AlertState& alert_state() const noexcept { return state_; }
  const PipelineConfig& config() const noexcept { return cfg_; }
  const Calibration& calibration() const noexcept { return cal_; }

 private:
  Calibration cal_;
  PipelineConfig cfg_;
  AlertState state_;
  RunSummary summary_;
};

struct RunResult {
  std::vector<ProximityStatus> statuses;
  std::vector<AlertEvent> events;
  RunSummary summary;
};

/// Single pass over the frames; results are handed to the callback as each
/// frame completes, so nothing accumulates here.
template <typename Frames>
RunSummary run_stream(const StreamHeader& /*header*/, Frames&& frames, const Calibration& cal,
                      const PipelineConfig& cfg,
                      const std::function<void(const FrameRecord&, const FrameResult&)>& sink) {
  StreamProcessor proc(cal, cfg);
  for (const FrameRecord& f : frames) {
    auto r = proc.process(f);
    if (sink) sink(f, r);
  }
  return proc.summary();
}

template <typename Frames>
RunResult run_stream(const StreamHeader& header, Frames&& frames, const Calibration& cal,
                     const PipelineConfig& cfg) {
  RunResult out;
  out.summary = run_stream(header, std::forward<Frames>(frames), cal, cfg,
                           [&](const FrameRecord&, const FrameResult& r) {
                             out.statuses.insert(out.statuses.end(), r.statuses.begin(),
                                                 r.statuses.end());
                             out.events.insert(out.events.end(), r.events.begin(), r.events.end());
                           });
  return out;
}

// ---------------------------------------------------------------------------
// Output records.

namespace detail {
inline nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}
}  // namespace detail

inline nlohmann::ordered_json to_json(const AlertEvent& e) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(e.kind));
  j["object_key"] = e.object_key;
  j["frame_index"] = e.frame_index;
  j["timestamp_ms"] = e.timestamp_ms;
  j["distance_m"] = detail::optional_number(e.distance_m);
  return j;
}

inline nlohmann::ordered_json to_json(const ProximityStatus& s) {
  nlohmann::ordered_json j;
  j["frame_index"] = s.frame_index;
  j["object_key"] = s.object_key;
  j["distance_m"] = detail::optional_number(s.distance_m);
  j["breach"] = s.breach;
  return j;
}

/// Per-frame geometry for external renderers (boxes, centerline, distances).
inline nlohmann::ordered_json overlay_json(const FrameRecord& f, const FrameResult& r) {
  nlohmann::ordered_json j;
  j["frame_index"] = f.frame_index;
  if (r.centerline) {
    auto pts = nlohmann::ordered_json::array();
    for (const auto& v : r.centerline->vertices()) pts.push_back({v.x, v.y});
    j["centerline"] = std::move(pts);
  } else {
    j["centerline"] = nullptr;
  }
  auto objs = nlohmann::ordered_json::array();
  for (const auto& s : r.statuses) {
    nlohmann::ordered_json o;
    o["object_key"] = s.object_key;
    o["bbox"] = {s.bbox.x1, s.bbox.y1, s.bbox.x2, s.bbox.y2};
    o["center"] = {s.center.x, s.center.y};
    o["distance_m"] = detail::optional_number(s.distance_m);
    o["breach"] = s.breach;
    objs.push_back(std::move(o));
  }
  j["objects"] = std::move(objs);
  return j;
}

inline nlohmann::ordered_json to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["frames"] = s.frames;
  j["detections"] = s.detections;
  j["statuses"] = s.statuses;
  j["breaches"] = s.breaches;
  j["alerts"] = s.alerts();
  j["raised"] = s.raised;
  j["cleared"] = s.cleared;
  j["unknown_distance"] = s.unknown_distance;
  j["frames_without_track"] = s.frames_without_track;
  j["horizon_failures"] = s.horizon_failures;
  j["timing_ns"] = {{"centerline", s.timing.centerline.count()},
                    {"classify", s.timing.classify.count()},
                    {"alert", s.timing.alert.count()}};
  return j;
}

}  // namespace railguard
