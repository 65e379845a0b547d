#pragma once

// Deterministic synthetic scenarios. Actors move on the ground plane in
// meters; detections are obtained by projecting into the image through the
// scenario calibration, and noise is applied only to the emitted detections.
//
// Random numbers come from std::mt19937_64, whose output sequence is fixed by
// the C++ standard. Uniform and normal variates are derived by hand (53-bit
// mantissa fill, Box-Muller) because std:: distributions are not portable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "railguard/calibration.hpp"
#include "railguard/geometry.hpp"
#include "railguard/ingest.hpp"
#include "railguard/metrics.hpp"

namespace railguard {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ScenarioRng {
 public:
  explicit ScenarioRng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

struct ConfidenceModel {
  double min = 0.9;  // constant model: min == max
  double max = 0.9;

  static ConfidenceModel constant(double v) { return {v, v}; }
  bool is_constant() const noexcept { return min == max; }
};

struct ActorSpec {
  ClassLabel class_label = ClassLabel::person;
  Point start;     // meters
  Point velocity;  // meters / second
  double width_m = 0.5;
  double height_m = 1.7;
  ConfidenceModel confidence;

  Point position_at(double t) const noexcept {
    return Point{start.x + velocity.x * t, start.y + velocity.y * t};
  }
};

struct NoiseSpec {
  double center_jitter_px = 0.0;
  double false_positive_rate = 0.0;  // per frame
  double miss_rate = 0.0;            // per detection
};

struct Scenario {
  std::uint64_t seed = 0;
  std::string source_id = "simgen";
  double duration_s = 1.0;
  double fps = 10.0;
  std::uint32_t frame_width = 1920;
  std::uint32_t frame_height = 1080;
  std::vector<Point> track;  // ground-plane vertices, meters
  double track_box_px = 8.0;
  double track_confidence = 0.95;
  std::vector<ActorSpec> actors;
  NoiseSpec noise;
  Calibration calibration;

  std::uint64_t frame_count() const {
    return static_cast<std::uint64_t>(std::floor(duration_s * fps + 1e-9));
  }
  double time_of(std::uint64_t frame) const { return static_cast<double>(frame) / fps; }
  std::uint64_t timestamp_ms(std::uint64_t frame) const {
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(frame) * 1000.0 / fps));
  }

  void validate() const {
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ScenarioError("fps must be > 0");
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw ScenarioError("duration_s must be > 0");
    if (track.empty()) throw ScenarioError("track needs at least one vertex");
    if (frame_width == 0 || frame_height == 0) throw ScenarioError("frame size must be positive");
    if (!(track_box_px >= 0.0)) throw ScenarioError("track_box_px must be >= 0");
    if (!(track_confidence >= 0.0 && track_confidence <= 1.0)) {
      throw ScenarioError("track_confidence must be in [0,1]");
    }
    for (const auto& a : actors) {
      if (!(a.width_m > 0.0 && a.height_m > 0.0)) throw ScenarioError("actor box size must be positive");
      if (!(a.confidence.min >= 0.0 && a.confidence.max <= 1.0 && a.confidence.min <= a.confidence.max)) {
        throw ScenarioError("actor confidence range must lie within [0,1]");
      }
      if (a.class_label == ClassLabel::track) throw ScenarioError("actors cannot be of class track");
    }
    auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate(noise.false_positive_rate) || !rate(noise.miss_rate)) {
      throw ScenarioError("noise rates must be in [0,1]");
    }
    if (!(noise.center_jitter_px >= 0.0)) throw ScenarioError("center_jitter_px must be >= 0");
  }
};

/// Noise-free ground distance from an actor to the track at frame k.
inline double true_track_distance(const Scenario& s, std::size_t actor, std::uint64_t frame) {
  const Point p = s.actors.at(actor).position_at(s.time_of(frame));
  return point_to_polyline_distance(p, Polyline(s.track));
}

/// Frames where the noise-free actor-to-track distance is <= threshold_m,
/// evaluated from the motion model (never from emitted detections).
inline std::set<std::uint64_t> breach_oracle(const Scenario& s, std::size_t actor, double threshold_m) {
  if (actor >= s.actors.size()) throw ScenarioError("actor index out of range");
  std::set<std::uint64_t> frames;
  const Polyline track(s.track);
  const auto& a = s.actors[actor];
  for (std::uint64_t k = 0, n = s.frame_count(); k < n; ++k) {
    if (point_to_polyline_distance(a.position_at(s.time_of(k)), track) <= threshold_m) frames.insert(k);
  }
  return frames;
}

struct ActorFrameTruth {
  Point ground;            // meters
  double distance_m = 0;   // to the ground track
  BoundingBox box;         // pixels, noise-free, after clipping
  bool visible = true;     // false when the box lies entirely outside the frame
  bool clipped = false;
  std::string object_key;  // key the pipeline assigns on a noise-free stream
};

struct GroundTruthBundle {
  std::vector<FrameRecord> frames;                       // true boxes, confidence 1.0
  std::vector<std::vector<ActorFrameTruth>> per_actor;   // [actor][frame]
  std::uint64_t clipped_boxes = 0;

  std::set<std::uint64_t> breach_frames(std::size_t actor, double threshold_m) const {
    std::set<std::uint64_t> out;
    const auto& tr = per_actor.at(actor);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (tr[k].distance_m <= threshold_m) out.insert(k);
    }
    return out;
  }

  std::vector<GroundTruthFrame> ground_truth_frames() const {
    std::vector<GroundTruthFrame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back({f.frame_index, ground_truth_boxes(f)});
    return out;
  }
};

struct GeneratedScenario {
  StreamHeader header;
  std::vector<FrameRecord> frames;
  GroundTruthBundle truth;
};

namespace detail {

/// Clips to the frame; returns nullopt when nothing remains visible.
inline std::optional<BoundingBox> clip_box(const BoundingBox& b, double w, double h, bool& clipped) {
  BoundingBox c{std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h), std::clamp(b.x2, 0.0, w),
                std::clamp(b.y2, 0.0, h)};
  clipped = !(c == b);
  if (b.x2 < 0.0 || b.y2 < 0.0 || b.x1 > w || b.y1 > h) return std::nullopt;
  return c;
}

/// Image box centered exactly on the projected ground center, sized by the
/// projected extent of the ground footprint.
inline BoundingBox project_actor_box(const Calibration& cal, const Point& g, double w_m, double h_m) {
  const Point c = cal.project_to_image(g);
  double hw = 0.0, hh = 0.0;
  for (double sx : {-0.5, 0.5}) {
    for (double sy : {-0.5, 0.5}) {
      const Point corner = cal.project_to_image(Point{g.x + sx * w_m, g.y + sy * h_m});
      hw = std::max(hw, std::abs(corner.x - c.x));
      hh = std::max(hh, std::abs(corner.y - c.y));
    }
  }
  return BoundingBox{c.x - hw, c.y - hh, c.x + hw, c.y + hh};
}

inline void assign_object_keys(std::vector<ActorFrameTruth*>& visible, const std::vector<ActorSpec>& actors,
                               const std::vector<std::size_t>& index) {
  for (ClassLabel cls : {ClassLabel::person, ClassLabel::object}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < visible.size(); ++i) {
      if (actors[index[i]].class_label == cls) members.push_back(i);
    }
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const Point ca = bbox_center(visible[a]->box);
      const Point cb = bbox_center(visible[b]->box);
      return ca.x < cb.x || (ca.x == cb.x && ca.y < cb.y);
    });
    for (std::size_t r = 0; r < members.size(); ++r) {
      visible[members[r]]->object_key = std::string(to_string(cls)) + "#" + std::to_string(r);
    }
  }
}

}  // namespace detail

/// Draw order per frame (fixed): for each track vertex a miss draw; for each
/// actor a miss draw, a confidence draw, and two jitter normals; then one
/// false-positive draw followed by five draws for its box and confidence.
inline GeneratedScenario generate(const Scenario& s) {
  s.validate();
  ScenarioRng rng(s.seed);
  GeneratedScenario out;
  out.header = StreamHeader{s.source_id, s.frame_width, s.frame_height, s.fps};
  out.truth.per_actor.resize(s.actors.size());

  const double W = s.frame_width;
  const double H = s.frame_height;
  const Polyline ground_track(s.track);

  std::vector<Point> track_px;
  for (const auto& v : s.track) track_px.push_back(s.calibration.project_to_image(v));

  for (std::uint64_t k = 0, n = s.frame_count(); k < n; ++k) {
    FrameRecord emitted{k, s.timestamp_ms(k), {}, std::nullopt};
    FrameRecord truth{k, s.timestamp_ms(k), {}, std::nullopt};

    for (const auto& c : track_px) {
      const double half = s.track_box_px / 2.0;
      bool clipped = false;
      auto box = detail::clip_box(BoundingBox{c.x - half, c.y - half, c.x + half, c.y + half}, W, H, clipped);
      const bool missed = rng.uniform() < s.noise.miss_rate;
      if (!box) continue;
      if (clipped) ++out.truth.clipped_boxes;
      truth.detections.push_back({ClassLabel::track, *box, 1.0});
      if (!missed) emitted.detections.push_back({ClassLabel::track, *box, s.track_confidence});
    }

    std::vector<ActorFrameTruth*> visible;
    std::vector<std::size_t> visible_index;
    for (std::size_t i = 0; i < s.actors.size(); ++i) {
      const auto& a = s.actors[i];
      ActorFrameTruth t;
      t.ground = a.position_at(s.time_of(k));
      t.distance_m = point_to_polyline_distance(t.ground, ground_track);

      const bool missed = rng.uniform() < s.noise.miss_rate;
      const double conf_draw = rng.uniform();
      const double jx = rng.normal() * s.noise.center_jitter_px;
      const double jy = rng.normal() * s.noise.center_jitter_px;
      const double conf = a.confidence.is_constant()
                              ? a.confidence.min
                              : a.confidence.min + (a.confidence.max - a.confidence.min) * conf_draw;

      const BoundingBox raw = detail::project_actor_box(s.calibration, t.ground, a.width_m, a.height_m);
      auto box = detail::clip_box(raw, W, H, t.clipped);
      t.visible = box.has_value();
      if (t.visible) {
        t.box = *box;
        if (t.clipped) ++out.truth.clipped_boxes;
        truth.detections.push_back({a.class_label, t.box, 1.0});
        if (!missed) {
          BoundingBox noisy = raw;
          if (s.noise.center_jitter_px > 0.0) {
            noisy = BoundingBox{raw.x1 + jx, raw.y1 + jy, raw.x2 + jx, raw.y2 + jy};
          }
          bool ignored = false;
          if (auto nb = detail::clip_box(noisy, W, H, ignored)) {
            emitted.detections.push_back({a.class_label, *nb, conf});
          }
        }
      }
      out.truth.per_actor[i].push_back(t);
    }
    for (std::size_t i = 0; i < s.actors.size(); ++i) {
      auto& t = out.truth.per_actor[i].back();
      if (t.visible) {
        visible.push_back(&t);
        visible_index.push_back(i);
      }
    }
    detail::assign_object_keys(visible, s.actors, visible_index);

    const bool fp = rng.uniform() < s.noise.false_positive_rate;
    const double fx = rng.uniform(), fy = rng.uniform(), fw = rng.uniform(), fh = rng.uniform();
    const double fc = rng.uniform(0.25, 0.9);
    if (fp) {
      const double bw = 20.0 + 60.0 * fw, bh = 20.0 + 60.0 * fh;
      const double x1 = fx * std::max(0.0, W - bw), y1 = fy * std::max(0.0, H - bh);
      emitted.detections.push_back({ClassLabel::object, BoundingBox{x1, y1, x1 + bw, y1 + bh}, fc});
    }

    out.frames.push_back(std::move(emitted));
    out.truth.frames.push_back(std::move(truth));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario files and breach-interval documents.

inline Point point_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ScenarioError(std::string(what) + " must be [x, y]");
  }
  return Point{j[0].get<double>(), j[1].get<double>()};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
  static const std::set<std::string> known = {"seed", "source_id", "duration_s", "fps", "frame_width",
                                              "frame_height", "track", "track_box_px", "track_confidence",
                                              "actors", "noise", "calibration"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ScenarioError("unknown scenario field \"" + key + "\"");
  }
  Scenario s;
  try {
    s.seed = j.value("seed", std::uint64_t{0});
    s.source_id = j.value("source_id", std::string("simgen"));
    s.duration_s = j.at("duration_s").get<double>();
    s.fps = j.at("fps").get<double>();
    s.frame_width = j.value("frame_width", std::uint32_t{1920});
    s.frame_height = j.value("frame_height", std::uint32_t{1080});
    s.track_box_px = j.value("track_box_px", 8.0);
    s.track_confidence = j.value("track_confidence", 0.95);
    for (const auto& v : j.at("track")) s.track.push_back(point_from_json(v, "track vertex"));
    if (j.contains("calibration")) s.calibration = calibration_from_json(j["calibration"]);
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      s.noise.center_jitter_px = n.value("center_jitter_px", 0.0);
      s.noise.false_positive_rate = n.value("false_positive_rate", 0.0);
      s.noise.miss_rate = n.value("miss_rate", 0.0);
    }
    for (const auto& aj : j.value("actors", nlohmann::json::array())) {
      ActorSpec a;
      const auto cls = parse_class_label(aj.at("class").get<std::string>());
      if (!cls) throw ScenarioError("unknown actor class");
      a.class_label = *cls;
      a.start = point_from_json(aj.at("start"), "actor start");
      a.velocity = point_from_json(aj.at("velocity"), "actor velocity");
      const auto size = point_from_json(aj.at("size"), "actor size");
      a.width_m = size.x;
      a.height_m = size.y;
      if (aj.contains("confidence")) {
        const auto& c = aj["confidence"];
        if (c.is_number()) {
          a.confidence = ConfidenceModel::constant(c.get<double>());
        } else {
          a.confidence = {c.at("min").get<double>(), c.at("max").get<double>()};
        }
      }
      s.actors.push_back(a);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("bad scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::ordered_json to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["source_id"] = s.source_id;
  j["duration_s"] = s.duration_s;
  j["fps"] = s.fps;
  j["frame_width"] = s.frame_width;
  j["frame_height"] = s.frame_height;
  auto track = nlohmann::ordered_json::array();
  for (const auto& v : s.track) track.push_back({v.x, v.y});
  j["track"] = track;
  j["track_box_px"] = s.track_box_px;
  j["track_confidence"] = s.track_confidence;
  auto actors = nlohmann::ordered_json::array();
  for (const auto& a : s.actors) {
    nlohmann::ordered_json aj;
    aj["class"] = std::string(to_string(a.class_label));
    aj["start"] = {a.start.x, a.start.y};
    aj["velocity"] = {a.velocity.x, a.velocity.y};
    aj["size"] = {a.width_m, a.height_m};
    if (a.confidence.is_constant()) {
      aj["confidence"] = a.confidence.min;
    } else {
      aj["confidence"] = {{"min", a.confidence.min}, {"max", a.confidence.max}};
    }
    actors.push_back(aj);
  }
  j["actors"] = actors;
  j["noise"] = {{"center_jitter_px", s.noise.center_jitter_px},
                {"false_positive_rate", s.noise.false_positive_rate},
                {"miss_rate", s.noise.miss_rate}};
  j["calibration"] = s.calibration.to_json();
  return j;
}

/// Maximal runs of consecutive frames, as [first, last] pairs.
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> frame_intervals(const std::set<std::uint64_t>& frames) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  for (auto k : frames) {
    if (!out.empty() && out.back().second + 1 == k) {
      out.back().second = k;
    } else {
      out.emplace_back(k, k);
    }
  }
  return out;
}

inline nlohmann::ordered_json breach_interval_document(const Scenario& s, const std::vector<double>& thresholds) {
  nlohmann::ordered_json doc;
  doc["source_id"] = s.source_id;
  doc["frames"] = s.frame_count();
  doc["fps"] = s.fps;
  auto actors = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.actors.size(); ++i) {
    nlohmann::ordered_json aj;
    aj["actor"] = i;
    aj["class"] = std::string(to_string(s.actors[i].class_label));
    auto per = nlohmann::ordered_json::array();
    for (double t : thresholds) {
      auto iv = nlohmann::ordered_json::array();
      for (const auto& [a, b] : frame_intervals(breach_oracle(s, i, t))) iv.push_back({a, b});
      per.push_back({{"threshold_m", t}, {"intervals", iv}});
    }
    aj["breaches"] = per;
    actors.push_back(aj);
  }
  doc["actors"] = actors;
  return doc;
}

}  // namespace railguard
