#include <gtest/gtest.h>

#include <random>
#include <set>

#include "railguard/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace railguard;

namespace {

Detection det(ClassLabel c, BoundingBox b, double conf = 0.9) { return {c, b, conf}; }

BoundingBox box_at(Point c, double half = 5.0) { return {c.x - half, c.y - half, c.x + half, c.y + half}; }

FrameRecord frame_with(std::vector<Detection> dets, std::uint64_t index = 0) {
  FrameRecord f;
  f.frame_index = index;
  f.timestamp_ms = index * 100;
  f.detections = std::move(dets);
  return f;
}

ProximityStatus status(const std::string& key, std::optional<double> d, double threshold = 1.0) {
  ProximityStatus s;
  s.object_key = key;
  s.distance_m = d;
  s.breach = d && *d <= threshold;
  return s;
}

/// Drives the FSM with one object whose distance per frame is given.
std::vector<AlertEvent> drive(const std::vector<std::optional<double>>& distances, const PipelineConfig& cfg) {
  AlertState st;
  std::vector<AlertEvent> all;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    std::vector<ProximityStatus> ss;
    ss.push_back(status("person#0", distances[k], cfg.threshold_m));
    auto ev = step_alert_state(st, ss, cfg, k + 1, (k + 1) * 100);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

using BreachSet = std::set<std::pair<std::uint64_t, std::string>>;

BreachSet breach_set(const std::vector<ProximityStatus>& ss) {
  BreachSet out;
  for (const auto& s : ss) {
    if (s.breach) out.insert({s.frame_index, s.object_key});
  }
  return out;
}

/// A busy random stream: one or two track boxes and several people/objects.
std::vector<FrameRecord> random_stream(std::uint64_t seed, std::size_t n = 200) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> pos(0, 400), conf(0, 1);
  std::vector<FrameRecord> frames;
  for (std::uint64_t k = 0; k < n; ++k) {
    std::vector<Detection> dets;
    for (int t = 0, nt = static_cast<int>(gen() % 3); t < nt; ++t) {
      dets.push_back(det(ClassLabel::track, box_at({200 + pos(gen) / 20, pos(gen)}, 10), conf(gen)));
    }
    for (int o = 0, no = static_cast<int>(gen() % 4); o < no; ++o) {
      dets.push_back(det(gen() % 2 ? ClassLabel::person : ClassLabel::object, box_at({pos(gen), pos(gen)}, 8),
                         conf(gen)));
    }
    frames.push_back(frame_with(std::move(dets), k));
  }
  return frames;
}

}  // namespace

TEST(Centerline, SingleBox) {
  PipelineConfig cfg;
  cfg.min_track_confidence = 0.5;
  auto line = build_track_centerline(frame_with({det(ClassLabel::track, {10, 0, 20, 100})}), cfg);
  ASSERT_TRUE(line);
  EXPECT_EQ(line->vertices(), (std::vector<Point>{{15, 50}}));
}

TEST(Centerline, SortedFarToNear) {
  PipelineConfig cfg;
  auto line = build_track_centerline(
      frame_with({det(ClassLabel::track, box_at({52, 90})), det(ClassLabel::track, box_at({50, 10}))}), cfg);
  ASSERT_TRUE(line);
  EXPECT_EQ(line->vertices(), (std::vector<Point>{{50, 10}, {52, 90}}));
}

TEST(Centerline, ConfidenceFilterGivesAbsent) {
  PipelineConfig cfg;
  cfg.min_track_confidence = 0.5;
  EXPECT_FALSE(build_track_centerline(frame_with({det(ClassLabel::track, {10, 0, 20, 100}, 0.3)}), cfg));
  EXPECT_FALSE(build_track_centerline(frame_with({det(ClassLabel::person, {10, 0, 20, 100})}), cfg));
}

TEST(Classify, ThresholdExamples) {
  const auto cal = Calibration::scalar(0.01);
  PipelineConfig cfg;
  const std::pair<double, bool> cases[] = {{80, true}, {100, true}, {120, false}};
  for (auto [y, breach] : cases) {
    auto ss = classify_frame(
        frame_with({det(ClassLabel::track, box_at({0, 0})), det(ClassLabel::person, box_at({0, y}))}), cal, cfg);
    ASSERT_EQ(ss.size(), 1u);
    ASSERT_TRUE(ss[0].distance_m);
    EXPECT_DOUBLE_EQ(*ss[0].distance_m, y / 100.0);
    EXPECT_EQ(ss[0].breach, breach) << "y=" << y;
    EXPECT_EQ(ss[0].object_key, "person#0");
  }
}

TEST(Classify, BoundaryIsInclusiveInBothModes) {
  // 1/8 m per px and a 4 px half-width keep everything exact.
  for (auto mode : {DistanceMode::center_to_center, DistanceMode::center_to_polyline}) {
    for (const auto& cal : {Calibration::scalar(0.125),
                            Calibration::homography(Matrix3{{{0.125, 0, 0}, {0, 0.125, 0}, {0, 0, 1}}})}) {
      PipelineConfig cfg;
      cfg.distance_mode = mode;
      auto ss = classify_frame(frame_with({det(ClassLabel::track, box_at({40, 40}, 4)),
                                           det(ClassLabel::object, box_at({48, 40}, 4))}),
                               cal, cfg);
      ASSERT_EQ(ss.size(), 1u);
      EXPECT_EQ(ss[0].distance_m, 1.0);
      EXPECT_TRUE(ss[0].breach);
    }
  }
}

TEST(Classify, PolylineModeUsesSegments) {
  PipelineConfig cfg;
  cfg.distance_mode = DistanceMode::center_to_polyline;
  const auto f = frame_with({det(ClassLabel::track, box_at({0, 0})), det(ClassLabel::track, box_at({0, 400})),
                             det(ClassLabel::person, box_at({50, 200}))});
  auto poly = classify_frame(f, Calibration::scalar(0.01), cfg);
  ASSERT_EQ(poly.size(), 1u);
  EXPECT_DOUBLE_EQ(*poly[0].distance_m, 0.5);
  cfg.distance_mode = DistanceMode::center_to_center;
  auto c2c = classify_frame(f, Calibration::scalar(0.01), cfg);
  EXPECT_DOUBLE_EQ(*c2c[0].distance_m, std::hypot(0.5, 2.0));
}

TEST(Classify, NoTrackMeansUnknown) {
  FrameDiagnostics diag;
  auto ss = classify_frame(frame_with({det(ClassLabel::person, box_at({0, 0}))}), Calibration::scalar(1), {}, &diag);
  ASSERT_EQ(ss.size(), 1u);
  EXPECT_FALSE(ss[0].distance_m);
  EXPECT_FALSE(ss[0].breach);
  EXPECT_TRUE(diag.track_missing);
}

TEST(Classify, HorizonFailureIsUnknownNotFatal) {
  // Points with y >= 100 sit on or beyond the horizon of this homography.
  const auto cal = Calibration::homography(Matrix3{{{1, 0, 0}, {0, 1, 0}, {0, -0.01, 1}}});
  FrameDiagnostics diag;
  auto ss = classify_frame(frame_with({det(ClassLabel::track, box_at({0, 0})),
                                       det(ClassLabel::person, box_at({0, 100})),
                                       det(ClassLabel::person, box_at({5, 10}))}),
                           cal, {}, &diag);
  ASSERT_EQ(ss.size(), 2u);
  EXPECT_FALSE(ss[0].distance_m);  // center x 0 ranks first
  EXPECT_TRUE(ss[1].distance_m);
  EXPECT_EQ(diag.horizon_failures, 1u);
}

TEST(Classify, KeysRankByCenterX) {
  auto ss = classify_frame(frame_with({det(ClassLabel::track, box_at({0, 0})),
                                       det(ClassLabel::person, box_at({30, 0})),
                                       det(ClassLabel::object, box_at({5, 0})),
                                       det(ClassLabel::person, box_at({10, 0})),
                                       det(ClassLabel::person, box_at({10, 0}), 0.1)}),
                           Calibration::scalar(1), {});
  ASSERT_EQ(ss.size(), 3u);  // the 0.1 detection is under the floor
  EXPECT_EQ(ss[0].object_key, "person#0");
  EXPECT_EQ(ss[0].center.x, 10);
  EXPECT_EQ(ss[1].object_key, "person#1");
  EXPECT_EQ(ss[1].center.x, 30);
  EXPECT_EQ(ss[2].object_key, "object#0");
}

TEST(AlertFsm, RaisedAfterDebounce) {
  PipelineConfig cfg;
  auto ev = drive({0.5, 0.5, 0.5}, cfg);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, AlertKind::raised);
  EXPECT_EQ(ev[0].frame_index, 3u);
}

TEST(AlertFsm, ClearResetsStreak) {
  PipelineConfig cfg;
  auto ev = drive({0.5, 2.0, 0.5, 0.5, 0.5}, cfg);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].frame_index, 5u);
}

TEST(AlertFsm, HysteresisBand) {
  PipelineConfig cfg;
  cfg.debounce_frames = 1;
  cfg.release_frames = 2;
  auto in_band = drive({0.5, 1.1, 1.1}, cfg);
  ASSERT_EQ(in_band.size(), 1u);
  auto out = drive({0.5, 1.3, 1.3}, cfg);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].kind, AlertKind::cleared);
  EXPECT_EQ(out[1].frame_index, 3u);
  // A band observation interrupts the release streak.
  auto interrupted = drive({0.5, 1.3, 1.1, 1.3}, cfg);
  EXPECT_EQ(interrupted.size(), 1u);
}

TEST(AlertFsm, AbsentObjectCountsTowardClearing) {
  PipelineConfig cfg;
  cfg.debounce_frames = 1;
  cfg.release_frames = 2;
  AlertState st;
  auto ev = step_alert_state(st, {status("person#0", 0.2)}, cfg, 1, 0);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_TRUE(step_alert_state(st, {}, cfg, 2, 0).empty());
  ev = step_alert_state(st, {}, cfg, 3, 0);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, AlertKind::cleared);
  EXPECT_FALSE(ev[0].distance_m);
  EXPECT_TRUE(st.empty());
}

TEST(AlertFsm, UnknownNeverRaisesOrClears) {
  PipelineConfig cfg;
  cfg.release_frames = 1;
  EXPECT_TRUE(drive({0.5, 0.5, std::nullopt, 0.5, 0.5}, cfg).empty());
  auto ev = drive({0.5, 0.5, 0.5, std::nullopt, std::nullopt, std::nullopt}, cfg);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, AlertKind::raised);
}

TEST(AlertFsm, StateIsBounded) {
  PipelineConfig cfg;
  AlertState st;
  for (std::uint64_t k = 0; k < 100; ++k) {
    step_alert_state(st, {status("object#" + std::to_string(k), 5.0)}, cfg, k, 0);
  }
  EXPECT_TRUE(st.empty());
}

TEST(RunStream, EmptyInput) {
  auto r = run_stream(StreamHeader{"x", 10, 10, 10}, std::vector<FrameRecord>{}, Calibration::scalar(1), {});
  EXPECT_TRUE(r.statuses.empty());
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.summary.frames, 0u);
}

TEST(RunStream, LinearApproachRaisesAtPredictedFrame) {
  const auto g = generate(fixtures::linear_approach());
  for (int debounce : {1, 3, 5}) {
    PipelineConfig cfg;
    cfg.debounce_frames = debounce;
    cfg.distance_mode = DistanceMode::center_to_polyline;  // boxes sit only at track vertices
    auto r = run_stream(g.header, g.frames, fixtures::linear_approach().calibration, cfg);
    ASSERT_FALSE(r.events.empty());
    EXPECT_EQ(r.events[0].kind, AlertKind::raised);
    EXPECT_EQ(r.events[0].frame_index, 40u + debounce - 1);
    EXPECT_EQ(r.summary.frames, 60u);
  }
}

TEST(RunStream, Deterministic) {
  const auto frames = random_stream(5);
  PipelineConfig cfg;
  cfg.threshold_m = 40;
  auto a = run_stream(StreamHeader{"x", 400, 400, 10}, frames, Calibration::scalar(0.5), cfg);
  auto b = run_stream(StreamHeader{"x", 400, 400, 10}, frames, Calibration::scalar(0.5), cfg);
  ASSERT_EQ(a.statuses.size(), b.statuses.size());
  for (std::size_t i = 0; i < a.statuses.size(); ++i) {
    EXPECT_EQ(to_json(a.statuses[i]).dump(), to_json(b.statuses[i]).dump());
  }
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(to_json(a.summary)["frames"], 200);
}

TEST(PipelineProperties, ThresholdMonotonicity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto frames = random_stream(seed);
    for (auto mode : {DistanceMode::center_to_center, DistanceMode::center_to_polyline}) {
      BreachSet prev;
      for (double t : {5.0, 20.0, 40.0, 80.0, 160.0}) {
        PipelineConfig cfg;
        cfg.threshold_m = t;
        cfg.distance_mode = mode;
        auto cur = breach_set(run_stream(StreamHeader{"x", 400, 400, 10}, frames, Calibration::scalar(0.5), cfg).statuses);
        EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = std::move(cur);
      }
    }
  }
}

TEST(PipelineProperties, CalibrationConsistency) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto frames = random_stream(seed + 100);
    PipelineConfig cfg;
    cfg.threshold_m = 30;
    auto a = run_stream(StreamHeader{"x", 400, 400, 10}, frames, Calibration::scalar(0.5), cfg);
    cfg.threshold_m = 60;
    auto b = run_stream(StreamHeader{"x", 400, 400, 10}, frames, Calibration::scalar(1.0), cfg);
    EXPECT_EQ(breach_set(a.statuses), breach_set(b.statuses));
  }
}

TEST(PipelineProperties, AlternationAndPersistence) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 gen(seed);
    PipelineConfig cfg;
    cfg.debounce_frames = 1 + static_cast<int>(gen() % 4);
    cfg.release_frames = 1 + static_cast<int>(gen() % 4);
    cfg.hysteresis_m = static_cast<double>(gen() % 3);
    AlertState st;
    std::map<std::string, std::vector<bool>> breach_history;
    std::map<std::string, std::vector<AlertKind>> kinds;
    for (std::uint64_t k = 0; k < 400; ++k) {
      std::vector<ProximityStatus> ss;
      for (int o = 0; o < 3; ++o) {
        const std::string key = "person#" + std::to_string(o);
        if (gen() % 6 == 0) {
          breach_history[key].push_back(false);
          continue;  // absent
        }
        std::optional<double> d;
        if (gen() % 10) d = static_cast<double>(gen() % 40) / 10.0;
        ss.push_back(status(key, d, cfg.threshold_m));
        breach_history[key].push_back(ss.back().breach);
      }
      for (const auto& e : step_alert_state(st, ss, cfg, k, k)) {
        kinds[e.object_key].push_back(e.kind);
        if (e.kind == AlertKind::raised) {
          const auto& h = breach_history[e.object_key];
          for (std::uint64_t j = k + 1 - cfg.debounce_frames; j <= k; ++j) EXPECT_TRUE(h[j]);
        }
      }
    }
    for (const auto& [key, ks] : kinds) {
      for (std::size_t i = 0; i < ks.size(); ++i) {
        EXPECT_EQ(ks[i], i % 2 == 0 ? AlertKind::raised : AlertKind::cleared) << key;
      }
    }
  }
}

TEST(PipelineConfig, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.threshold_m = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.debounce_frames = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.hysteresis_m = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(OutputRecords, AlertJsonShape) {
  AlertEvent e{AlertKind::raised, "person#0", 7, 700, 0.75};
  EXPECT_EQ(to_json(e).dump(),
            R"({"kind":"raised","object_key":"person#0","frame_index":7,"timestamp_ms":700,"distance_m":0.75})");
  e.distance_m.reset();
  EXPECT_EQ(to_json(e)["distance_m"], nullptr);
}
