#include <gtest/gtest.h>

#include "propsel/bench.hpp"
#include "propsel/tracker.hpp"
#include "support.hpp"

using namespace propsel;
using testing_support::expect_error;

namespace {

SynthConfig small_scene(std::vector<Similarity> script) {
  SynthConfig c;
  c.width = 160;
  c.height = 120;
  c.object = {80, 60, 40, 32, 0};
  c.script = std::move(script);
  return c;
}

Proposal make(RotatedBox box, double det, Source src = Source::Detector) {
  Proposal p;
  p.box = box;
  p.det_score = det;
  p.source = src;
  return p;
}

// Edge cue over a map holding one closed square outline on [20, 35]^2.
struct EdgeFixture {
  EdgeMap map{60, 60};
  CueHistory hist;
  tracker_detail::CueEval cue;

  EdgeFixture() {
    for (int k = 20; k <= 35; ++k) {
      map.response[20 * 60 + k] = map.response[35 * 60 + k] = 1.0f;
      map.response[k * 60 + 20] = map.response[k * 60 + 35] = 1.0f;
    }
  }
  void score(std::vector<Proposal>& cands) {
    cue = {Cue::Edges, tracker_detail::prepare_cue(map, {0, 0, 60, 60}, cands, 0.1), &hist};
    for (auto& p : cands) p.edge_score = edgeness_score(cue.maps.map, cue.maps.contours, p.box);
  }
};

const SynthSequence& static_sequence() {
  static const SynthSequence s = synth_sequence(small_scene(constant_script(3, {})));
  return s;
}

}  // namespace

TEST(Variant, Presets) {
  const auto ss = apply_variant({}, "ss");
  EXPECT_FALSE(ss.multiscale || ss.geometry || ss.edges || ss.motion_boundaries);
  const auto ms = apply_variant({}, "ms");
  EXPECT_TRUE(ms.multiscale);
  EXPECT_FALSE(ms.geometry);
  const auto rot = apply_variant({}, "ms-rot");
  EXPECT_TRUE(rot.geometry);
  EXPECT_FALSE(rot.edges);
  const auto e = apply_variant({}, "ms-rot-e");
  EXPECT_TRUE(e.edges);
  EXPECT_FALSE(e.motion_boundaries);
  const auto em = apply_variant({}, "ms-rot-em");
  EXPECT_TRUE(em.multiscale && em.geometry && em.edges && em.motion_boundaries);
  EXPECT_EQ(em.variant, "ms-rot-em");
  expect_error(ErrorCode::InvalidArgument, [] { apply_variant({}, "ms-em"); });
}

TEST(Init, StateStartsAtGroundTruth) {
  const auto& seq = static_sequence();
  const TrackerState s = init(seq.frames[0], seq.gt[0], TrackerConfig{});
  EXPECT_EQ(s.prev_box, seq.gt[0]);
  EXPECT_EQ(s.kalman_conf.tau, 0.0);
  EXPECT_EQ(s.kalman_conf.p, 0.1);
  EXPECT_EQ(s.kalman_angle.tau, 0.0);
  EXPECT_EQ(s.edge_hist.size(), 0u);
  EXPECT_EQ(s.frame_index, 0);
  const TrackerState again = init(seq.frames[0], seq.gt[0], TrackerConfig{});
  EXPECT_EQ(again.model.linear.w, s.model.linear.w);
  EXPECT_EQ(again.model.linear.bias, s.model.linear.bias);
}

TEST(Init, RotatedGtSetsBaseAngle) {
  SynthConfig c = small_scene(constant_script(1, {}));
  c.object.angle = 40;
  const auto seq = synth_sequence(c);
  EXPECT_EQ(init(seq.frames[0], seq.gt[0], TrackerConfig{}).model.base_angle, 40.0);
}

TEST(Init, SingleScaleVariantScansOneScale) {
  const auto& seq = static_sequence();
  EXPECT_EQ(init(seq.frames[0], seq.gt[0], apply_variant({}, "ss")).model.config.scales.size(), 1u);
  EXPECT_EQ(init(seq.frames[0], seq.gt[0], apply_variant({}, "ms")).model.config.scales.size(), 7u);
}

TEST(Step, StaticSceneUsesDetectorOnly) {
  const auto& seq = static_sequence();
  TrackerState s = init(seq.frames[0], seq.gt[0], TrackerConfig{});
  const FlowField zero(seq.frames[0].width(), seq.frames[0].height());
  for (int t = 1; t < 3; ++t) {
    const StepResult r = step(s, seq.frames[t - 1], seq.frames[t], &zero);
    EXPECT_FALSE(r.motion_gate_passed);
    EXPECT_EQ(r.geometry_generated, 0);
    for (const auto& c : r.candidates) EXPECT_EQ(c.source, Source::Detector);
    EXPECT_GE(polygon_iou(r.winner.box, seq.gt[t]), 0.8);
    EXPECT_EQ(s.frame_index, t);
    EXPECT_EQ(s.prev_box, r.winner.box);
  }
}

TEST(Step, FrameSizeMismatchRejected) {
  const auto& seq = static_sequence();
  TrackerState s = init(seq.frames[0], seq.gt[0], TrackerConfig{});
  expect_error(ErrorCode::SizeMismatch, [&] { step(s, seq.frames[0], Image(10, 10)); });
}

TEST(Selection, SingletonInconclusiveSetSkipsEdgeness) {
  std::vector<Proposal> cands = {make({27.5, 27.5, 20, 20, 0}, 0.85), make({40, 27.5, 16, 20, 0}, 0.90),
                                 make({27.5, 27.5, 24, 24, 0}, 0.80)};
  EdgeFixture fx;
  fx.score(cands);
  for (int i = 0; i < 5; ++i) fx.hist.push(*cands[2].edge_score);
  const auto inc = tracker_detail::inconclusive_set(cands, 0.99);
  ASSERT_EQ(inc, (std::vector<std::size_t>{1}));
  const auto sel = tracker_detail::select_winner(cands, {fx.cue}, {27.5, 27.5, 20, 20, 0}, 0.99);
  EXPECT_EQ(sel.winner, 1u);
  EXPECT_EQ(sel.cue, Cue::None);
  EXPECT_EQ(sel.inconclusive_count, 1u);
}

TEST(Selection, EnclosingCandidateWinsViaEdgeness) {
  // Both within 1%; the higher-scoring one cuts the contour.
  std::vector<Proposal> cands = {make({24, 27.5, 16, 24, 0}, 0.900), make({27.5, 27.5, 24, 24, 0}, 0.895)};
  EdgeFixture fx;
  fx.score(cands);
  EXPECT_EQ(*cands[0].edge_score, 0.0);
  EXPECT_GT(*cands[1].edge_score, 0.0);
  for (int i = 0; i < 5; ++i) fx.hist.push(*cands[1].edge_score);
  const auto sel = tracker_detail::select_winner(cands, {fx.cue}, cands[0].box, 0.99);
  EXPECT_EQ(sel.inconclusive_count, 2u);
  EXPECT_EQ(sel.winner, 1u);
  EXPECT_EQ(sel.cue, Cue::Edges);
}

TEST(Selection, ClosedGateFallsBackToScore) {
  std::vector<Proposal> cands = {make({24, 27.5, 16, 24, 0}, 0.900), make({27.5, 27.5, 24, 24, 0}, 0.895)};
  EdgeFixture fx;
  fx.score(cands);
  // Warm-up: fewer than five entries.
  for (int i = 0; i < 4; ++i) fx.hist.push(*cands[1].edge_score);
  auto sel = tracker_detail::select_winner(cands, {fx.cue}, cands[0].box, 0.99);
  EXPECT_EQ(sel.winner, 0u);
  EXPECT_EQ(sel.cue, Cue::None);
  // Full history far from the current score.
  for (int i = 0; i < 5; ++i) fx.hist.push(1.0);
  sel = tracker_detail::select_winner(cands, {fx.cue}, cands[0].box, 0.99);
  EXPECT_EQ(sel.winner, 0u);
}

TEST(Selection, ScoreTiesPreferDetectorThenSmallerRotation) {
  const RotatedBox prev{30, 30, 20, 20, 10};
  std::vector<Proposal> cands = {make({30, 30, 20, 20, 30}, 0.7, Source::Geometry),
                                 make({30, 30, 20, 20, 40}, 0.7, Source::Detector),
                                 make({30, 30, 20, 20, 12}, 0.7, Source::Geometry),
                                 make({30, 30, 20, 20, 10}, 0.7, Source::Detector)};
  EXPECT_EQ(tracker_detail::select_winner(cands, {}, prev, 0.99).winner, 3u);
  cands.pop_back();
  EXPECT_EQ(tracker_detail::select_winner(cands, {}, prev, 0.99).winner, 1u);
  cands.erase(cands.begin() + 1);
  EXPECT_EQ(tracker_detail::select_winner(cands, {}, prev, 0.99).winner, 1u);
}

TEST(TrackSequence, TwoFramesGiveOneStep) {
  const auto& seq = static_sequence();
  const std::vector<Image> two(seq.frames.begin(), seq.frames.begin() + 2);
  const auto res = track_sequence(two, seq.gt[0], TrackerConfig{});
  EXPECT_EQ(res.steps.size(), 1u);
  EXPECT_FALSE(res.failed_frame);
  expect_error(ErrorCode::InsufficientData, [&] { track_sequence({seq.frames[0]}, seq.gt[0], TrackerConfig{}); });
}

class MovingScene : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    seq_ = new SynthSequence(synth_sequence(small_scene(constant_script(7, {1.004, 3.0, 1.0, 0.5}))));
  }
  static void TearDownTestSuite() { delete seq_; }
  static SynthSequence* seq_;
};
SynthSequence* MovingScene::seq_ = nullptr;

TEST_F(MovingScene, CandidateInvariants) {
  SideData side;
  side.flow = seq_->flow;
  const auto res = track_sequence(seq_->frames, seq_->gt[0], TrackerConfig{}, &side);
  ASSERT_EQ(res.steps.size(), 7u);
  bool saw_geometry = false;
  for (const auto& r : res.steps) {
    ASSERT_FALSE(r.candidates.empty());
    EXPECT_LE(r.candidates.size(), 10u);
    ASSERT_LT(r.winner_index, r.candidates.size());
    EXPECT_EQ(r.candidates[r.winner_index].box, r.winner.box);
    double best = 0;
    for (const auto& c : r.candidates) {
      EXPECT_GE(c.det_score, 0.0);
      EXPECT_LE(c.det_score, 1.0);
      EXPECT_EQ(c.source == Source::Geometry, c.geo_confidence.has_value());
      EXPECT_TRUE(c.edge_score.has_value());
      EXPECT_TRUE(c.mb_score.has_value());
      saw_geometry |= c.source == Source::Geometry;
      best = std::max(best, c.det_score);
    }
    if (r.inconclusive_count == 1) { EXPECT_EQ(r.winner.det_score, best); }
  }
  EXPECT_TRUE(saw_geometry);
}

TEST_F(MovingScene, DisabledCuesReduceToArgmaxScore) {
  SideData side;
  side.flow = seq_->flow;
  const auto res = track_sequence(seq_->frames, seq_->gt[0], apply_variant({}, "ms-rot"), &side);
  for (const auto& r : res.steps) {
    EXPECT_EQ(r.cue, Cue::None);
    double best = 0;
    for (const auto& c : r.candidates) {
      best = std::max(best, c.det_score);
      EXPECT_FALSE(c.edge_score.has_value());
    }
    EXPECT_EQ(r.winner.det_score, best);
  }
}

TEST_F(MovingScene, Deterministic) {
  const std::vector<Image> frames(seq_->frames.begin(), seq_->frames.begin() + 4);
  const auto a = track_sequence(frames, seq_->gt[0], TrackerConfig{});
  const auto b = track_sequence(frames, seq_->gt[0], TrackerConfig{});
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].winner.box, b.steps[i].winner.box);
    EXPECT_EQ(a.steps[i].candidates.size(), b.steps[i].candidates.size());
  }
}
