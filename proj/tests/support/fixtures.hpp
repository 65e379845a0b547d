#pragma once

// Shared test fixtures: seeded scenarios and randomized evaluation instances.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "railguard/metrics.hpp"
#include "railguard/simgen.hpp"

namespace fixtures {

using namespace railguard;

/// Straight vertical track at x = 10 m, person starting 5 m away walking
/// straight at it at 1 m/s, 10 fps, 6 s. First frame within 1 m is 40.
inline Scenario linear_approach() {
  Scenario s;
  s.seed = 1;
  s.source_id = "linear-approach";
  s.duration_s = 6.0;
  s.fps = 10.0;
  s.track = {{10.0, 1.0}, {10.0, 19.0}};
  s.calibration = Calibration::scalar(0.03125);
  ActorSpec a;
  a.class_label = ClassLabel::person;
  a.start = {15.0, 10.0};
  a.velocity = {-1.0, 0.0};
  a.width_m = 0.5;
  a.height_m = 1.5;
  a.confidence = ConfidenceModel::constant(0.9);
  s.actors.push_back(a);
  return s;
}

/// Noise-free random scenario with a straight two-vertex track, scalar
/// calibration and one person plus (sometimes) one object, all kept inside
/// the frame for the whole duration.
inline Scenario random_scenario(std::uint64_t seed) {
  std::mt19937_64 gen(seed * 7919 + 17);
  auto uni = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
  };
  const double scales[] = {1.0 / 16, 1.0 / 32, 1.0 / 64};
  const double fps_choices[] = {5.0, 10.0, 15.0, 25.0, 30.0};

  for (;;) {
    Scenario s;
    s.seed = seed;
    s.source_id = "random-" + std::to_string(seed);
    s.fps = fps_choices[gen() % 5];
    s.duration_s = std::floor(uni(4.0, 8.0));
    const double mpp = scales[gen() % 3];
    s.calibration = Calibration::scalar(mpp);
    const double W = s.frame_width * mpp, H = s.frame_height * mpp;  // field in meters
    const double margin = 1.0;
    s.track = {{uni(margin, W - margin), uni(margin, H - margin)}, {uni(margin, W - margin), uni(margin, H - margin)}};

    const std::size_t n_actors = 1 + gen() % 2;
    for (std::size_t i = 0; i < n_actors; ++i) {
      ActorSpec a;
      a.class_label = i == 0 ? ClassLabel::person : ClassLabel::object;
      a.start = {uni(margin, W - margin), uni(margin, H - margin)};
      const double speed = uni(0.2, 2.5);
      const double heading = uni(0.0, 6.283185307179586);
      a.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
      a.width_m = uni(0.3, 0.8);
      a.height_m = uni(0.8, 1.9);
      a.confidence = ConfidenceModel::constant(0.9);
      s.actors.push_back(a);
    }

    bool inside = true;
    for (const auto& a : s.actors) {
      const Point end = a.position_at(s.duration_s);
      for (const Point& p : {a.start, end}) {
        inside = inside && p.x > margin && p.x < W - margin && p.y > margin && p.y < H - margin;
      }
    }
    if (inside) return s;
  }
}

struct EvalInstance {
  std::vector<oracle::Frame> frames;
};

/// Frames of ground-truth boxes with predictions that are either jittered
/// copies (likely matches) or random boxes. Confidences are sometimes rounded
/// to two decimals to force ties.
inline EvalInstance random_eval_instance(std::uint64_t seed, std::size_t max_predictions = 100) {
  std::mt19937_64 gen(seed);
  auto uni = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
  };
  const bool ties = gen() % 2 == 0;
  EvalInstance inst;
  const std::size_t n_frames = 1 + gen() % 6;
  std::size_t budget = 1 + gen() % max_predictions;
  for (std::size_t f = 0; f < n_frames; ++f) {
    oracle::Frame fr;
    const std::size_t n_gt = gen() % 7;
    for (std::size_t j = 0; j < n_gt; ++j) {
      const double x = uni(0, 200), y = uni(0, 200), w = uni(5, 60), h = uni(5, 60);
      fr.gt.push_back({gen() % 4 == 0 ? ClassLabel::object : ClassLabel::person, {x, y, x + w, y + h}});
    }
    const std::size_t n_pred = f + 1 == n_frames ? budget : std::min<std::size_t>(budget, gen() % 25);
    budget -= n_pred;
    for (std::size_t i = 0; i < n_pred; ++i) {
      Detection d;
      d.class_label = gen() % 5 == 0 ? ClassLabel::object : ClassLabel::person;
      if (!fr.gt.empty() && gen() % 3 != 0) {
        const auto& g = fr.gt[gen() % fr.gt.size()].bbox;
        const double j = uni(0, 12);
        d.bbox = {g.x1 + uni(-j, j), g.y1 + uni(-j, j), 0, 0};
        d.bbox.x2 = d.bbox.x1 + g.width() + uni(-j, j) + 12;
        d.bbox.y2 = d.bbox.y1 + g.height() + uni(-j, j) + 12;
      } else {
        const double x = uni(0, 200), y = uni(0, 200);
        d.bbox = {x, y, x + uni(5, 60), y + uni(5, 60)};
      }
      d.confidence = uni(0.0, 1.0);
      if (ties) d.confidence = std::round(d.confidence * 20.0) / 20.0;
      fr.preds.push_back(d);
    }
    inst.frames.push_back(std::move(fr));
  }
  return inst;
}

inline EvaluationSet evaluation_set(const EvalInstance& inst, double iou_thr, ClassLabel cls) {
  EvaluationSet set;
  for (const auto& f : inst.frames) set.add(match_detections(f.preds, f.gt, iou_thr, cls));
  return set;
}

}  // namespace fixtures
