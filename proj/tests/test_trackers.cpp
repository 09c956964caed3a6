#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cutrack/eval.hpp"
#include "cutrack/tracking.hpp"
#include "cutrack/training.hpp"
#include "fixtures.hpp"

using namespace cutrack;

namespace {

PointCloud random_points(std::size_t n, std::uint64_t seed, double half = 1.0) {
  Rng rng(seed);
  PointCloud c(n);
  for (Vec3& p : c) p = {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
  return c;
}

std::vector<double> param_snapshot(const ParameterStore& s) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.insert(out.end(), s[i].value.data().begin(), s[i].value.data().end());
  return out;
}

/// A target that moves along x at constant speed, with a few surface points per frame.
Sequence moving_sequence(double speed, std::size_t frames) {
  Sequence s;
  s.sequence_id = "moving";
  s.category = "car";
  for (std::size_t f = 0; f < frames; ++f) {
    FrameRecord fr;
    fr.frame_id = static_cast<std::int64_t>(f);
    const BBox3D box(speed * static_cast<double>(f), 0, 0.8, 1.8, 1.6, 4.2, 0);
    fr.boxes.push_back({1, "car", box});
    fr.cloud = from_canonical(sample_object_points(box.extents(), ShapeKind::kBoxShell, 200, 0, f), box);
    s.frames.push_back(std::move(fr));
  }
  return s;
}

class OraclePredictor : public Predictor {
 public:
  explicit OraclePredictor(const Sequence& s) : seq_(s) {}
  Prediction predict(const TrackContext& ctx) override { return {seq_.target(ctx.frame), {}}; }

 private:
  const Sequence& seq_;
};

class StillPredictor : public Predictor {
 public:
  Prediction predict(const TrackContext& ctx) override { return {ctx.prev_box, {}}; }
};

/// Records what the loop hands over.
class SpyPredictor : public Predictor {
 public:
  std::vector<BBox3D> prev_boxes, first_boxes;
  Prediction predict(const TrackContext& ctx) override {
    prev_boxes.push_back(ctx.prev_box);
    first_boxes.push_back(ctx.first_box);
    const Vec3 c = ctx.prev_box.center();
    return {ctx.prev_box.with_center({c.x + 0.5, c.y, c.z}), {}};
  }
};

}  // namespace

TEST(SelectBestProposal, Examples) {
  auto props = [](std::initializer_list<double> scores) {
    std::vector<Proposal> p;
    for (double s : scores) p.push_back({{}, 0.0, s});
    return p;
  };
  EXPECT_EQ(select_best_proposal(props({0.1, 0.9, 0.3})), 1u);
  EXPECT_EQ(select_best_proposal(props({0.4, 0.4, 0.4})), 0u);
  EXPECT_EQ(select_best_proposal(props({0.2})), 0u);
  EXPECT_THROW(select_best_proposal(std::vector<Proposal>{}), std::invalid_argument);
}

TEST(SiameseHead, ZeroHeadProposesSeedsAtHalfScore) {
  TrackerModel m(fixture::tiny_model(Paradigm::kSiamese), 1);
  m.params().set_zero("head");
  Tape t;
  const SiameseOutput o = siamese_forward(t, m, random_points(32, 2), {1.8, 1.6, 4.2}, random_points(32, 3, 2.0));
  ASSERT_EQ(o.proposals.size(), 16u);
  for (std::size_t i = 0; i < o.proposals.size(); ++i) {
    EXPECT_EQ(o.proposals[i].center, o.seeds[i]);
    EXPECT_EQ(o.proposals[i].score, 0.5);
    EXPECT_EQ(o.proposals[i].theta, 0.0);
  }
}

TEST(SiameseHead, CanonicalOrderingMakesPermutationIrrelevant) {
  TrackerModel m(fixture::tiny_model(Paradigm::kSiamese), 4);
  const PointCloud tmpl = random_points(32, 5);
  PointCloud search = random_points(32, 6, 2.0);
  PointCloud shuffled = search;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 7, shuffled.end());
  auto canon = [](PointCloud c) {
    std::sort(c.begin(), c.end(), [](const Vec3& a, const Vec3& b) {
      return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
    });
    return c;
  };
  Tape t;
  const SiameseOutput a = siamese_forward(t, m, tmpl, {1, 1, 1}, canon(search));
  const SiameseOutput b = siamese_forward(t, m, tmpl, {1, 1, 1}, canon(shuffled));
  auto key = [](const std::vector<Proposal>& ps) {
    std::vector<std::tuple<double, double, double, double, double>> k;
    for (const Proposal& p : ps) k.emplace_back(p.center.x, p.center.y, p.center.z, p.theta, p.score);
    std::sort(k.begin(), k.end());
    return k;
  };
  EXPECT_EQ(key(a.proposals), key(b.proposals));
}

TEST(SiameseHead, OffsetsDenormalizeByTemplateExtents) {
  TrackerModel m(fixture::tiny_model(Paradigm::kSiamese), 7);
  const Extents e{1.8, 1.6, 4.2};
  Tape t;
  const SiameseOutput o = siamese_forward(t, m, random_points(32, 8), e, random_points(32, 9, 2.0));
  for (std::size_t i = 0; i < o.proposals.size(); ++i) {
    const Vec3 n{o.offsets.value().at(i, 0), o.offsets.value().at(i, 1), o.offsets.value().at(i, 2)};
    const Vec3 d = o.proposals[i].center - o.seeds[i];
    EXPECT_NEAR(d.x, n.x * e.l, 1e-12);
    EXPECT_NEAR(d.y, n.y * e.w, 1e-12);
    EXPECT_NEAR(d.z, n.z * e.h, 1e-12);
    const Vec3 back = normalize_offset(d, e);
    EXPECT_NEAR(back.x, n.x, 1e-12);
    EXPECT_LE(std::abs(o.proposals[i].theta), kMaxDeltaYaw);
  }
}

TEST(MotionHead, ZeroHeadKeepsPreviousBox) {
  TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 10);
  m.params().set_zero("head");
  const PointCloud prev = random_points(32, 11), cur = random_points(32, 12);
  const std::vector<int> mask(32, 1);
  Tape t;
  const MotionOutput o = motion_forward(t, m, prev, mask, cur, {1.8, 1.6, 4.2});
  EXPECT_EQ(o.delta, (Vec3{0, 0, 0}));
  EXPECT_EQ(o.dtheta, 0.0);
  const BBox3D ref(3, -2, 1, 1.8, 1.6, 4.2, 0.4);
  EXPECT_EQ(motion_box(o, ref, ref.extents()), ref);
}

TEST(MotionHead, DuplicatedCurrentPointsLeaveOutput) {
  // Stage 0 keeps every distinct point and the tiny radius confines groups to
  // coincident points, so duplicates only repeat rows that are already there.
  ModelConfig cfg = fixture::tiny_model(Paradigm::kMotion);
  cfg.encoder.stages[0].samples = 48;
  cfg.encoder.stages[0].block.radius = 1e-3;
  cfg.encoder.stages[1].samples = 24;
  TrackerModel m(cfg, 13);
  const PointCloud prev = random_points(24, 14), cur = random_points(24, 15);
  PointCloud doubled = cur;
  doubled.insert(doubled.end(), cur.begin(), cur.end());
  std::vector<int> mask(24, 0);
  for (std::size_t i = 0; i < 12; ++i) mask[i] = 1;
  Tape t;
  const MotionOutput a = motion_forward(t, m, prev, mask, cur, {1, 1, 1});
  const MotionOutput b = motion_forward(t, m, prev, mask, doubled, {1, 1, 1});
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.dtheta, b.dtheta);
  EXPECT_EQ(a.seg_logits.value(), b.seg_logits.value());
}

TEST(MotionHead, MaskLengthChecked) {
  TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 16);
  Tape t;
  EXPECT_THROW(motion_forward(t, m, random_points(32, 1), std::vector<int>(5, 0), random_points(32, 2), {1, 1, 1}),
               std::invalid_argument);
}

TEST(MotionHead, FallbackFlagWhenNothingIsForeground) {
  ModelConfig cfg = fixture::tiny_model(Paradigm::kMotion);
  TrackerModel m(cfg, 17);
  m.params().set_zero("head.seg");
  // Logit 0 sits at the 0.5 threshold and does not count as foreground.
  Tape t;
  const MotionOutput o = motion_forward(t, m, random_points(32, 18), std::vector<int>(32, 1), random_points(32, 19), {1, 1, 1});
  EXPECT_TRUE(o.fallback);
  EXPECT_TRUE(std::isfinite(o.delta.x));
}

TEST(Loss, PerfectPredictionsAreNearZero) {
  Tape t;
  LossTargets tg;
  tg.labels = {1, 0, 1};
  tg.rows = {0, 2};
  tg.offsets = Tensor::matrix(3, 3, {0.1, 0.2, 0.3, 0, 0, 0, -0.4, 0.5, 0.6});
  tg.theta = Tensor::matrix(3, 1, {0.2, 0.2, 0.2});
  const Var logits = t.constant(Tensor::matrix(3, 1, {40, -40, 40}));
  const LossTerms l = loss_total(logits, t.constant(tg.offsets), t.constant(tg.theta), tg, {});
  EXPECT_LT(l.total.value().item(), 1e-6);
  EXPECT_FALSE(l.no_positive);
}

TEST(Loss, ZeroOffsetsAgainstZeroTargets) {
  Tape t;
  LossTargets tg;
  tg.labels = {1};
  tg.rows = {0};
  tg.offsets = Tensor({1, 3});
  tg.theta = Tensor({1, 1});
  const LossTerms l = loss_total(t.constant(Tensor({1, 1})), t.constant(Tensor({1, 3})), t.constant(Tensor({1, 1})), tg, {});
  EXPECT_EQ(l.off, 0.0);
}

TEST(Loss, HandBuiltTwoPointCase) {
  Tape t;
  LossTargets tg;
  tg.labels = {1, 0};
  tg.rows = {0};
  tg.offsets = Tensor::matrix(2, 3, {0.5, 0, 0, 9, 9, 9});
  tg.theta = Tensor::matrix(2, 1, {0.0, 0.0});
  const Var logits = t.constant(Tensor::matrix(2, 1, {0.0, 1.0}));
  const Var off = t.constant(Tensor::matrix(2, 3, {0.0, 2.0, 0.0, 0, 0, 0}));
  const Var th = t.constant(Tensor::matrix(2, 1, {0.5, 0.0}));
  const LossWeights w{2.0, 3.0, 5.0};
  const LossTerms l = loss_total(logits, off, th, tg, w);
  const double bce = 0.5 * (std::log(2.0) + std::log(1.0 + std::exp(1.0)));
  const double sl1 = (0.5 * 0.25 + 1.5 + 0.0) / 3.0;  // |0.5| quadratic, |2| linear
  const double ang = 0.5 * 0.25;
  EXPECT_NEAR(l.cls, bce, 1e-12);
  EXPECT_NEAR(l.off, sl1, 1e-12);
  EXPECT_NEAR(l.ang, ang, 1e-12);
  EXPECT_NEAR(l.total.value().item(), 2 * bce + 3 * sl1 + 5 * ang, 1e-12);
}

TEST(Loss, NoPositiveRowsZeroesRegression) {
  Tape t;
  LossTargets tg;
  tg.labels = {0, 0};
  tg.offsets = Tensor({2, 3});
  tg.theta = Tensor({2, 1});
  const LossTerms l = loss_total(t.constant(Tensor({2, 1})), t.constant(Tensor({2, 3}, 5.0)), t.constant(Tensor({2, 1}, 1.0)), tg, {});
  EXPECT_TRUE(l.no_positive);
  EXPECT_EQ(l.off, 0.0);
  EXPECT_EQ(l.ang, 0.0);
  EXPECT_NEAR(l.total.value().item(), std::log(2.0), 1e-12);
}

TEST(Targets, SwitchesSelectLabelsAndOffsets) {
  ModelConfig cfg = fixture::tiny_model(Paradigm::kSiamese);
  const BBox3D gt(0, 0, 0, 1.8, 1.6, 4.2, 0);
  const PointCloud seeds{{0.83, 0, 0}, {0.85, 0, 0}, {0.5, 0.2, 0}};
  const LossTargets on = siamese_targets(cfg, seeds, gt, gt, gt.extents());
  EXPECT_EQ(on.labels, (std::vector<int>{1, 0, 1}));
  EXPECT_NEAR(on.offsets.at(0, 0), -0.83 / 4.2, 1e-12);
  cfg.ablation.unified_objective = false;
  const LossTargets off = siamese_targets(cfg, seeds, gt, gt, gt.extents());
  EXPECT_EQ(off.labels, (std::vector<int>{0, 0, 1}));
  EXPECT_NEAR(off.offsets.at(0, 0), -0.83, 1e-12);
}

TEST(Targets, RegionFollowsInputSwitch) {
  ModelConfig cfg = fixture::tiny_model(Paradigm::kMotion);
  const BBox3D b(0, 0, 0, 0.6, 1.75, 0.8, 0);
  EXPECT_EQ(region_for(cfg, b).box.extents(), (Extents{1.2, 3.5, 1.6}));
  cfg.ablation.unified_inputs = false;
  EXPECT_EQ(region_for(cfg, b).box.extents(), (Extents{4.6, 5.75, 4.8}));
}

TEST(Training, OverfitsSingleSample) {
  ModelConfig cfg = fixture::tiny_model(Paradigm::kMotion);
  TrackerModel m(cfg, 20);
  std::vector<Sequence> data = gen_synthetic(fixture::small_synth(1, 2, 21));
  TrainConfig tc;
  tc.steps = 500;
  tc.batch = 1;
  tc.lr = 3e-3;
  tc.center_jitter = 0;
  tc.yaw_jitter = 0;
  tc.fixed_sampling = true;
  const TrainResult r = train(m, data, tc);
  ASSERT_EQ(r.curve.size(), 500u);
  EXPECT_LT(r.curve.back().loss, 0.1 * r.curve.front().loss);
}

TEST(Training, ZeroLearningRateKeepsParameters) {
  TrackerModel m(fixture::tiny_model(Paradigm::kSiamese), 22);
  const auto before = param_snapshot(m.params());
  TrainConfig tc;
  tc.steps = 3;
  tc.batch = 2;
  tc.lr = 0;
  train(m, gen_synthetic(fixture::small_synth(2, 3, 23)), tc);
  EXPECT_EQ(param_snapshot(m.params()), before);
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto data = gen_synthetic(fixture::small_synth(3, 4, 24));
  TrainConfig tc;
  tc.steps = 10;
  tc.batch = 2;
  tc.seed = 5;
  std::vector<std::vector<double>> params;
  std::vector<std::string> curves;
  for (int i = 0; i < 2; ++i) {
    TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 25);
    curves.push_back(loss_curve_csv(train(m, data, tc)));
    params.push_back(param_snapshot(m.params()));
  }
  EXPECT_EQ(params[0], params[1]);
  EXPECT_EQ(curves[0], curves[1]);
}

TEST(Training, DivergenceReportsStep) {
  TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 26);
  TrainConfig tc;
  tc.steps = 20;
  tc.batch = 1;
  tc.lr = 1e300;
  try {
    train(m, gen_synthetic(fixture::small_synth(1, 3, 27)), tc);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_GE(e.step(), 1u);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  tc.lr = -1;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc = {};
  tc.steps = 0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  EXPECT_THROW(TrainConfig::from_json({{"stepz", 3}}), std::invalid_argument);
}

TEST(TrackLoop, OracleGivesPerfectIou) {
  const Sequence s = moving_sequence(0.7, 8);
  OraclePredictor p(s);
  const TrackResult r = track_sequence(p, TrackingInput::from_sequence(s));
  for (std::size_t f = 0; f < s.frames.size(); ++f) EXPECT_NEAR(rotated_iou_3d(r.boxes[f], s.target(f)), 1.0, 1e-12);
}

TEST(TrackLoop, StillTrackerOnStaticTarget) {
  const Sequence s = moving_sequence(0.0, 6);
  StillPredictor p;
  const TrackResult r = track_sequence(p, TrackingInput::from_sequence(s));
  for (std::size_t f = 0; f < s.frames.size(); ++f) EXPECT_NEAR(rotated_iou_3d(r.boxes[f], s.target(f)), 1.0, 1e-12);
}

TEST(TrackLoop, StillTrackerLosesMovingTargetMonotonically) {
  const Sequence s = moving_sequence(0.9, 10);
  StillPredictor p;
  const TrackResult r = track_sequence(p, TrackingInput::from_sequence(s));
  double last = 1.0;
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    const double iou = rotated_iou_3d(r.boxes[f], s.target(f));
    // Closed form for two equal boxes shifted along their length axis.
    EXPECT_NEAR(iou, std::max(0.0, 4.2 - 0.9 * f) / (4.2 + std::min(4.2, 0.9 * f)), 1e-9);
    EXPECT_LE(iou, last);
    last = iou;
  }
  EXPECT_EQ(last, 0.0);
}

TEST(TrackLoop, ReadsGroundTruthOnlyAtFrameZero) {
  Sequence s = moving_sequence(0.5, 6);
  const TrackingInput in = TrackingInput::from_sequence(s);
  // The input type carries one box; everything later is unlabelled clouds.
  EXPECT_EQ(in.first_box, s.target(0));
  EXPECT_EQ(in.clouds.size(), s.frames.size() - 1);
  SpyPredictor spy;
  const TrackResult r = track_sequence(spy, in);
  for (std::size_t i = 0; i < spy.prev_boxes.size(); ++i) {
    EXPECT_EQ(spy.first_boxes[i], s.target(0));
    EXPECT_EQ(spy.prev_boxes[i], r.boxes[i]);
  }
  // Rewriting every later annotation leaves the tracker's output untouched.
  Sequence tampered = s;
  for (std::size_t f = 1; f < tampered.frames.size(); ++f)
    tampered.frames[f].boxes[0].box = BBox3D(99, 99, 99, 1, 1, 1, 1);
  SpyPredictor spy2;
  const TrackResult r2 = track_sequence(spy2, TrackingInput::from_sequence(tampered));
  EXPECT_EQ(r.boxes, r2.boxes);
  TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 28);
  EXPECT_EQ(track_sequence(m, TrackingInput::from_sequence(s)).boxes,
            track_sequence(m, TrackingInput::from_sequence(tampered)).boxes);
}

TEST(TrackLoop, EmptyFrameCarriesPreviousBox) {
  Sequence s = moving_sequence(0.5, 4);
  s.frames[2].cloud.clear();
  TrackerModel m(fixture::tiny_model(Paradigm::kSiamese), 29);
  const TrackResult r = track_sequence(m, TrackingInput::from_sequence(s));
  EXPECT_TRUE(r.diagnostics[2].empty_region);
  EXPECT_EQ(r.boxes[2], r.boxes[1]);
  EXPECT_EQ(r.boxes[0], s.target(0));
}

TEST(TrackerModel, SaveLoadReproducesForward) {
  for (Paradigm p : {Paradigm::kSiamese, Paradigm::kMotion}) {
    TrackerModel m(fixture::tiny_model(p), 30);
    const auto dir = fixture::temp_dir("model_" + to_string(p));
    m.save(dir / "m.cutm");
    const TrackerModel back = TrackerModel::load(dir / "m.cutm");
    EXPECT_EQ(back.config().to_json(), m.config().to_json());
    const Sequence s = moving_sequence(0.4, 4);
    EXPECT_EQ(track_sequence(m, TrackingInput::from_sequence(s)).boxes,
              track_sequence(back, TrackingInput::from_sequence(s)).boxes);
  }
}

TEST(TrackerModel, EveryAblationCombinationRuns) {
  const auto data = gen_synthetic(fixture::small_synth(2, 3, 31));
  for (Paradigm p : {Paradigm::kSiamese, Paradigm::kMotion}) {
    for (int mask = 0; mask < 8; ++mask) {
      ModelConfig cfg = fixture::tiny_model(p);
      cfg.ablation = {bool(mask & 1), bool(mask & 2), bool(mask & 4)};
      TrackerModel m(cfg, 32);
      TrainConfig tc;
      tc.steps = 2;
      tc.batch = 2;
      train(m, data, tc);
      const TrackResult r = track_sequence(m, TrackingInput::from_sequence(data[0]));
      EXPECT_EQ(r.boxes.size(), data[0].frames.size());
      for (const BBox3D& b : r.boxes) EXPECT_TRUE(b.center().finite());
    }
  }
}

TEST(ModelConfig, JsonRoundtripAndValidation) {
  const ModelConfig cfg = ModelConfig::desk_default(Paradigm::kSiamese);
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  EXPECT_EQ(cfg.alpha, 1.0);
  EXPECT_EQ(cfg.beta, 0.4);
  ModelConfig bad = cfg;
  bad.alpha = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Latency, SchemaStabilityAndMonotoneLoad) {
  const TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 33);
  const auto rows = latency_bench(m, {32, 512}, 100, 5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LE(rows[0].forward_mean_ms, rows[1].forward_mean_ms);
  const std::string csv = latency_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "points,preprocess_mean_ms,preprocess_std_ms,forward_mean_ms,forward_std_ms,postprocess_mean_ms,"
            "postprocess_std_ms");
  const auto again = latency_bench(m, {32}, 100, 5);
  const double sd = std::max({rows[0].forward_std_ms, again[0].forward_std_ms, 1e-3});
  EXPECT_LT(std::abs(again[0].forward_mean_ms - rows[0].forward_mean_ms), 3 * sd);
}
