#include <gtest/gtest.h>

#include "railguard/simgen.hpp"
#include "support/fixtures.hpp"
#include "support/soundness.hpp"

using namespace railguard;

namespace {

Scenario straight_track(std::vector<ActorSpec> actors) {
  Scenario s;
  s.seed = 3;
  s.duration_s = 2.0;
  s.fps = 10.0;
  s.track = {{10.0, 2.0}, {10.0, 30.0}};
  s.calibration = Calibration::scalar(0.0625);
  s.actors = std::move(actors);
  return s;
}

ActorSpec actor(Point start, Point velocity, ClassLabel c = ClassLabel::person) {
  ActorSpec a;
  a.class_label = c;
  a.start = start;
  a.velocity = velocity;
  return a;
}

}  // namespace

TEST(Generate, ZeroActorsGiveTrackOnlyFrames) {
  const auto g = generate(straight_track({}));
  ASSERT_EQ(g.frames.size(), 20u);
  for (const auto& f : g.frames) {
    ASSERT_EQ(f.detections.size(), 2u);
    for (const auto& d : f.detections) EXPECT_EQ(d.class_label, ClassLabel::track);
  }
}

TEST(Generate, SameSeedSameBytes) {
  auto s = fixtures::random_scenario(4);
  s.noise = {2.5, 0.3, 0.2};
  s.actors[0].confidence = {0.3, 0.95};
  const auto a = generate(s), b = generate(s);
  EXPECT_EQ(write_stream(a.header, a.frames), write_stream(b.header, b.frames));
  s.seed += 1;
  const auto c = generate(s);
  EXPECT_NE(write_stream(a.header, a.frames), write_stream(c.header, c.frames));
}

TEST(Generate, TimestampsFollowFps) {
  auto s = straight_track({});
  s.fps = 30.0;
  const auto g = generate(s);
  ASSERT_EQ(g.frames.size(), 60u);
  EXPECT_EQ(g.frames[1].timestamp_ms, 33u);
  EXPECT_EQ(g.frames[2].timestamp_ms, 67u);
  EXPECT_EQ(g.frames[30].timestamp_ms, 1000u);
}

TEST(Generate, BoxesStayInFrameOrAreFlagged) {
  auto s = straight_track({actor({0.1, 10}, {0, 0.5}), actor({300, 10}, {0, 0}, ClassLabel::object)});
  const auto g = generate(s);
  EXPECT_GT(g.truth.clipped_boxes, 0u);
  for (const auto& t : g.truth.per_actor[0]) {
    EXPECT_TRUE(t.visible);
    EXPECT_TRUE(t.clipped);
    EXPECT_GE(t.box.x1, 0.0);
  }
  for (const auto& t : g.truth.per_actor[1]) EXPECT_FALSE(t.visible);  // 4800 px, far outside
  for (const auto& f : g.frames) {
    for (const auto& d : f.detections) {
      EXPECT_GE(d.bbox.x1, 0.0);
      EXPECT_LE(d.bbox.x2, s.frame_width);
      EXPECT_GE(d.bbox.y1, 0.0);
      EXPECT_LE(d.bbox.y2, s.frame_height);
    }
  }
}

TEST(Generate, NoiseOnlyTouchesEmittedDetections) {
  auto s = fixtures::random_scenario(9);
  const auto clean = generate(s);
  s.noise = {3.0, 1.0, 0.0};
  const auto noisy = generate(s);
  EXPECT_EQ(clean.truth.frames, noisy.truth.frames);
  for (std::size_t k = 0; k < noisy.frames.size(); ++k) {
    EXPECT_EQ(noisy.frames[k].detections.size(), clean.frames[k].detections.size() + 1);  // one false positive
  }
  s.noise = {0.0, 0.0, 1.0};
  for (const auto& f : generate(s).frames) EXPECT_TRUE(f.detections.empty());
}

TEST(Generate, GroundTruthHasUnitConfidence) {
  const auto g = generate(fixtures::linear_approach());
  for (const auto& f : g.truth.frames)
    for (const auto& d : f.detections) EXPECT_EQ(d.confidence, 1.0);
  EXPECT_EQ(g.truth.ground_truth_frames().size(), g.frames.size());
}

TEST(BreachOracle, LinearApproachClosedForm) {
  const auto s = fixtures::linear_approach();
  const auto frames = breach_oracle(s, 0, 1.0);
  std::set<std::uint64_t> expect;
  for (std::uint64_t k = 40; k < 60; ++k) expect.insert(k);
  EXPECT_EQ(frames, expect);
  for (std::uint64_t k = 0; k < 60; ++k) {
    EXPECT_NEAR(true_track_distance(s, 0, k), std::abs(5.0 - 0.1 * static_cast<double>(k)), 1e-12);
  }
  EXPECT_EQ(generate(s).truth.breach_frames(0, 1.0), frames);
}

TEST(BreachOracle, Examples) {
  const auto parallel = straight_track({actor({12, 3}, {0, 1})});
  EXPECT_TRUE(breach_oracle(parallel, 0, 1.0).empty());
  const auto still = straight_track({actor({10.5, 10}, {0, 0})});
  EXPECT_EQ(breach_oracle(still, 0, 1.0).size(), still.frame_count());
  EXPECT_THROW(breach_oracle(still, 1, 1.0), ScenarioError);
}

TEST(Soundness, LinearApproach) {
  soundness::Report rep;
  soundness::check(fixtures::linear_approach(), {0.5, 1.0, 2.0}, rep);
  for (const auto& f : rep.failures) ADD_FAILURE() << f;
  EXPECT_GT(rep.breach_pairs, 0u);
}

TEST(Soundness, SeededScenarios) {
  soundness::Report rep;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    soundness::check(fixtures::random_scenario(seed), {1.0, 3.0, 10.0}, rep);
  }
  for (const auto& f : rep.failures) ADD_FAILURE() << f;
  EXPECT_GT(rep.breach_pairs, 100u);
  EXPECT_GT(rep.raised_checked, 20u);
}

TEST(ScenarioFile, JsonRoundTrip) {
  auto s = fixtures::random_scenario(2);
  s.noise = {1.5, 0.1, 0.05};
  s.actors[0].confidence = {0.4, 0.8};
  const auto j = to_json(s);
  EXPECT_EQ(to_json(scenario_from_json(nlohmann::json::parse(j.dump()))).dump(), j.dump());
}

TEST(ScenarioFile, Rejections) {
  auto parse = [](const char* text) { return scenario_from_json(nlohmann::json::parse(text)); };
  EXPECT_NO_THROW(parse(R"({"duration_s":1,"fps":10,"track":[[0,0]]})"));
  EXPECT_THROW(parse(R"({"duration_s":1,"fps":10,"track":[]})"), ScenarioError);
  EXPECT_THROW(parse(R"({"duration_s":1,"fps":0,"track":[[0,0]]})"), ScenarioError);
  EXPECT_THROW(parse(R"({"duration_s":1,"fps":10,"track":[[0,0]],"wind":3})"), ScenarioError);
  EXPECT_THROW(parse(R"({"duration_s":1,"fps":10,"track":[[0,0]],"noise":{"miss_rate":2}})"), ScenarioError);
  EXPECT_THROW(parse(R"({"duration_s":1,"fps":10,"track":[[0,0]],
                        "actors":[{"class":"track","start":[0,0],"velocity":[0,0],"size":[1,1]}]})"),
               ScenarioError);
  EXPECT_THROW(parse(R"({"fps":10,"track":[[0,0]]})"), ScenarioError);
}

TEST(BreachIntervals, Document) {
  EXPECT_EQ(frame_intervals({1, 2, 3, 7, 9, 10}),
            (std::vector<std::pair<std::uint64_t, std::uint64_t>>{{1, 3}, {7, 7}, {9, 10}}));
  const auto doc = breach_interval_document(fixtures::linear_approach(), {1.0});
  EXPECT_EQ(doc["actors"][0]["breaches"][0]["intervals"].dump(), "[[40,59]]");
}
