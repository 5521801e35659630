// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "drcf/labeling.hpp"
#include "drcf/synthetic.hpp"

using namespace drcf;

namespace {

SpeedProfile ramp_profile(double v0, const std::vector<std::pair<std::size_t, double>>& pieces) {
  SpeedProfile p;
  double v = v0;
  p.v.push_back(v);
  for (auto [steps, a] : pieces)
    for (std::size_t k = 0; k < steps; ++k) {
      v = std::max(0.0, v + a * kDt);
      p.v.push_back(v);
    }
  return p;
}

}  // namespace

TEST(ClassifySegment, HandExamples) {
  EXPECT_EQ(classify_segment(0.0, SectionLabel::kCarFollowing, 14.0).regime, DrivingRegime::kFollowing);
  EXPECT_EQ(classify_segment(0.0, SectionLabel::kCarFollowing, 0.0).regime, DrivingRegime::kStationary);
  EXPECT_EQ(classify_segment(0.8, SectionLabel::kFreeFlow, 10.0).regime, DrivingRegime::kFreeAcceleration);
  EXPECT_EQ(classify_segment(0.8, SectionLabel::kCarFollowing, 10.0).regime, DrivingRegime::kAcceleration);
  EXPECT_EQ(classify_segment(-0.8, SectionLabel::kCarFollowing, 10.0).regime, DrivingRegime::kDeceleration);
  EXPECT_EQ(classify_segment(0.1, SectionLabel::kFreeFlow, 10.0).regime, DrivingRegime::kCruising);
}

TEST(ClassifySegment, ThresholdIsInclusiveForSteady) {
  EXPECT_EQ(classify_segment(0.5, SectionLabel::kCarFollowing, 10.0).regime, DrivingRegime::kFollowing);
  EXPECT_EQ(classify_segment(-0.5, SectionLabel::kCarFollowing, 10.0).regime, DrivingRegime::kFollowing);
}

TEST(ClassifySegment, FreeFlowDecelerationMapsToCruiseAndFlags) {
  const auto c = classify_segment(-1.0, SectionLabel::kFreeFlow, 10.0);
  EXPECT_EQ(c.regime, DrivingRegime::kCruising);
  EXPECT_TRUE(c.ff_deceleration);
}

TEST(ClassifySegment, TotalDeterministicAndConsistent) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(-3, 3), vm(0, 30);
  for (int i = 0; i < 5000; ++i) {
    const double t = th(rng), v = i % 10 == 0 ? 0.05 : vm(rng);
    for (auto s : {SectionLabel::kCarFollowing, SectionLabel::kFreeFlow}) {
      const auto a = classify_segment(t, s, v), b = classify_segment(t, s, v);
      EXPECT_EQ(a.regime, b.regime);
      EXPECT_TRUE(consistent_with(a.regime, s));
      if (s == SectionLabel::kCarFollowing && std::abs(t) <= 0.5 && v < 0.1) {
        EXPECT_EQ(a.regime, DrivingRegime::kStationary);
      }
    }
  }
}

TEST(Regime, OneHotAndNames) {
  for (int r = 0; r < kNumRegimes; ++r) {
    const auto h = one_hot(static_cast<DrivingRegime>(r));
    double sum = 0.0;
    for (double x : h) sum += x;
    EXPECT_EQ(sum, 1.0);
    EXPECT_EQ(h[static_cast<std::size_t>(r)], 1.0);
    EXPECT_EQ(regime_from_name(regime_name(static_cast<DrivingRegime>(r))), static_cast<DrivingRegime>(r));
  }
  EXPECT_FALSE(regime_from_name("X").has_value());
}

TEST(LabelRegimes, ConstantSpeedIsAllFollowing) {
  const auto p = ramp_profile(12.0, {{100, 0.0}});
  const auto seg = segment_and_refine(p);
  const auto l = label_regimes(p, seg.segments, {seg.segments.size(), SectionLabel::kCarFollowing});
  for (auto r : l.regimes) EXPECT_EQ(r, DrivingRegime::kFollowing);
  EXPECT_TRUE(l.transitions.empty());
}

TEST(LabelRegimes, AccelerationThenFollowingHasOneTransition) {
  const auto p = ramp_profile(5.0, {{50, 1.0}, {50, 0.0}});
  const std::vector<Segment> segs = {fit_segment(p, 0, 50), fit_segment(p, 50, 100)};
  const auto l = label_regimes(p, segs, {2, SectionLabel::kCarFollowing});
  ASSERT_EQ(l.transitions.size(), 1u);
  EXPECT_NEAR(l.transitions[0].t, 5.0, 1e-9);
  EXPECT_EQ(l.transitions[0].from, DrivingRegime::kAcceleration);
  EXPECT_EQ(l.transitions[0].to, DrivingRegime::kFollowing);
  EXPECT_EQ(l.regimes.size(), p.v.size());
}

TEST(LabelRegimes, ShortSegmentJoinsNeighbourWithCloserSlope) {
  // 5 s at +1, 1 s at +0.9, 5 s flat: the middle piece belongs with the ramp.
  const auto p = ramp_profile(5.0, {{50, 1.0}, {10, 0.9}, {50, 0.0}});
  const std::vector<Segment> segs = {fit_segment(p, 0, 50), fit_segment(p, 50, 60), fit_segment(p, 60, 110)};
  const auto l = label_regimes(p, segs, {SectionLabel::kCarFollowing, SectionLabel::kFreeFlow, SectionLabel::kCarFollowing});
  ASSERT_EQ(l.transitions.size(), 1u);
  EXPECT_NEAR(l.transitions[0].t, 6.0, 1e-9);
  for (std::size_t k = 0; k < 60; ++k) {
    EXPECT_EQ(l.regimes[k], DrivingRegime::kAcceleration);
    EXPECT_EQ(l.sections[k], SectionLabel::kCarFollowing);
  }
}

TEST(LabelRegimes, TilingViolationIsInternalError) {
  const auto p = ramp_profile(5.0, {{60, 0.0}});
  EXPECT_THROW(label_regimes(p, {fit_segment(p, 0, 30), fit_segment(p, 31, 60)}, {2, SectionLabel::kCarFollowing}),
               InternalError);
  EXPECT_THROW(label_regimes(p, {fit_segment(p, 0, 60)}, {}), InternalError);
}

TEST(LabelRegimes, StopAndGoFollowsConstructionLabels) {
  ScenarioConfig cfg;
  cfg.schedule = stop_and_go_schedule();
  cfg.follower_count = 2;
  cfg.law = FollowerLaw::kNewell;
  const auto data = generate_synthetic(cfg, 1);
  for (const auto& pair : extract_pairs(data.trajectories)) {
    const auto a = analyze_pair(pair);
    const auto l = label_pair(a, 1e9);  // every unit car-following
    const auto& truth = data.truth.at(pair.follower.vehicle_id);
    std::size_t ok = 0;
    for (std::size_t k = 0; k < l.regimes.size(); ++k) ok += l.regimes[k] == truth[k];
    EXPECT_GE(static_cast<double>(ok) / l.regimes.size(), 0.9);
    std::vector<DrivingRegime> runs;
    for (auto r : l.regimes)
      if (runs.empty() || runs.back() != r) runs.push_back(r);
    const std::vector<DrivingRegime> want = {DrivingRegime::kFollowing, DrivingRegime::kDeceleration,
                                             DrivingRegime::kStationary, DrivingRegime::kAcceleration,
                                             DrivingRegime::kFollowing};
    EXPECT_EQ(runs, want);
  }
}

TEST(LabelRegimes, CalibratedThresholdKeepsFollowersCarFollowing) {
  std::vector<LeaderFollowerPair> followers, pool_pairs;
  for (int s = 0; s < 4; ++s) {
    ScenarioConfig cfg;
    cfg.leader_v0 = 12.0 + s;
    cfg.schedule = stop_and_go_schedule(12.0 + s, 1.2, 5.0, 8.0);
    cfg.follower_count = 2;
    cfg.law = FollowerLaw::kNewell;
    for (auto& p : extract_pairs(generate_synthetic(cfg, s).trajectories)) followers.push_back(p);
    cfg.newell.tau_n = 4.0 + s;  // loosely coupled cruiser
    cfg.newell.d_n = 30.0;
    cfg.follower_count = 1;
    for (auto& p : extract_pairs(generate_synthetic(cfg, 50 + s).trajectories)) pool_pairs.push_back(p);
  }
  const auto fa = analyze_pairs(followers), ca = analyze_pairs(pool_pairs);
  auto pool = fa;
  pool.insert(pool.end(), ca.begin(), ca.end());
  const auto split = calibrate_section_threshold(pool);
  for (const auto& a : fa)
    for (auto s : label_pair(a, split.threshold).sections) EXPECT_EQ(s, SectionLabel::kCarFollowing);
  std::size_t ff = 0;
  for (const auto& a : ca)
    for (auto s : label_sections(a.segment_tau, split.threshold)) ff += s == SectionLabel::kFreeFlow;
  EXPECT_GT(ff, 0u);  // every free-flow unit is a cruiser
}

TEST(LabelsCsv, Header) {
  const auto p = ramp_profile(12.0, {{40, 0.0}});
  const auto l = label_regimes(p, {fit_segment(p, 0, 40)}, {SectionLabel::kCarFollowing});
  std::ostringstream os;
  write_labels_csv(os, l);
  EXPECT_EQ(os.str().substr(0, 31), "t,regime_id,regime_name,section");
  EXPECT_NE(os.str().find(",F,CF"), std::string::npos);
}
