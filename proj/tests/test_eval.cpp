#include <gtest/gtest.h>

#include <random>

#include "cutrack/eval.hpp"
#include "cutrack/pipeline.hpp"
#include "cutrack/serialize.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cutrack;

namespace {

std::vector<FrameResult> with_ious(std::initializer_list<double> ious) {
  std::vector<FrameResult> r;
  for (double v : ious) r.push_back({v, 0.0});
  return r;
}

std::vector<FrameResult> with_dists(std::initializer_list<double> d) {
  std::vector<FrameResult> r;
  for (double v : d) r.push_back({1.0, v});
  return r;
}

std::vector<CategoryResult> table_rows(const double (&success)[4], const double (&precision)[4]) {
  const char* names[4] = {"Car", "Pedestrian", "Van", "Cyclist"};
  const std::size_t frames[4] = {6424, 6088, 1248, 308};
  std::vector<CategoryResult> rows;
  for (int i = 0; i < 4; ++i) rows.push_back({names[i], frames[i], success[i], precision[i]});
  return rows;
}

TrackResult as_result(const Sequence& s) {
  TrackResult r;
  r.sequence_id = s.sequence_id;
  r.category = s.category;
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    r.frame_ids.push_back(s.frames[f].frame_id);
    r.boxes.push_back(s.target(f));
    r.diagnostics.push_back({});
  }
  return r;
}

}  // namespace

TEST(Success, Examples) {
  EXPECT_DOUBLE_EQ(success_metric(with_ious({0.5, 1.0})), 75.0);
  EXPECT_DOUBLE_EQ(success_metric(with_ious({0, 0, 0})), 0.0);
  EXPECT_THROW(success_metric(std::vector<FrameResult>{}), std::invalid_argument);
}

TEST(Success, MatchesThresholdSweep) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> ious(1000);
  std::vector<FrameResult> frames;
  for (double& v : ious) {
    v = u(rng);
    frames.push_back({v, 0});
  }
  EXPECT_NEAR(success_metric(frames), oracle::success_sweep(ious, 0.001), 0.1);
}

TEST(Precision, Examples) {
  EXPECT_DOUBLE_EQ(precision_metric(with_dists({0, 0})), 100.0);
  EXPECT_DOUBLE_EQ(precision_metric(with_dists({2.5, 9})), 0.0);
  EXPECT_DOUBLE_EQ(precision_metric(with_dists({1.0})), 50.0);
  EXPECT_THROW(precision_metric(std::vector<FrameResult>{}), std::invalid_argument);
}

TEST(Precision, MatchesThresholdSweep) {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(1.5);
  std::vector<double> d(1000);
  std::vector<FrameResult> frames;
  for (double& v : d) {
    v = e(rng);
    frames.push_back({1, v});
  }
  EXPECT_NEAR(precision_metric(frames), oracle::precision_sweep(d, 2.0, 0.001), 0.1);
}

TEST(Precision, MonotoneInEachDistance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 3);
  std::vector<FrameResult> frames(50);
  for (FrameResult& f : frames) f = {1, u(rng)};
  for (int t = 0; t < 200; ++t) {
    const double before = precision_metric(frames);
    frames[t % frames.size()].center_dist += u(rng);
    EXPECT_LE(precision_metric(frames), before);
  }
}

TEST(Aggregate, ReproducesPublishedMeans) {
  const auto p2b = aggregate_weighted_mean(table_rows({56.2, 28.7, 40.8, 32.1}, {72.8, 49.6, 48.4, 44.7}));
  EXPECT_NEAR(p2b.success, 42.4, 0.05);
  EXPECT_NEAR(p2b.precision, 60.0, 0.05);
  EXPECT_EQ(p2b.frames, 14068u);
  const auto sc3d = aggregate_weighted_mean(table_rows({41.3, 18.2, 40.4, 41.5}, {57.9, 37.8, 47.0, 70.4}));
  EXPECT_NEAR(sc3d.success, 31.2, 0.05);
  EXPECT_NEAR(sc3d.precision, 48.5, 0.05);
}

TEST(Aggregate, SingleRowIsItself) {
  const CategoryResult r{"Car", 12, 55.5, 66.6};
  const auto m = aggregate_weighted_mean(std::vector<CategoryResult>{r}, "Car");
  EXPECT_EQ(m.frames, 12u);
  EXPECT_DOUBLE_EQ(m.success, 55.5);
  EXPECT_DOUBLE_EQ(m.precision, 66.6);
  EXPECT_THROW(aggregate_weighted_mean(std::vector<CategoryResult>{}), std::invalid_argument);
}

TEST(Evaluate, GroundTruthPredictionsScorePerfectly) {
  const auto data = gen_synthetic(fixture::small_synth(6, 4, 11));
  std::vector<TrackResult> results;
  for (const Sequence& s : data) results.push_back(as_result(s));
  const auto rows = evaluate(results, data);
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows.back().category, "mean");
  EXPECT_EQ(rows.back().frames, 24u);
  for (const CategoryResult& r : rows) {
    EXPECT_NEAR(r.success, 100.0, 1e-9) << r.category;
    EXPECT_NEAR(r.precision, 100.0, 1e-9) << r.category;
  }
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) EXPECT_LT(rows[i - 1].category, rows[i].category);
}

TEST(Evaluate, MismatchedFramesAreErrors) {
  const auto data = gen_synthetic(fixture::small_synth(1, 3, 12));
  TrackResult r = as_result(data[0]);
  r.frame_ids[1] = 7;
  EXPECT_THROW(evaluate({r}, data), std::invalid_argument);
  r = as_result(data[0]);
  r.boxes.pop_back();
  EXPECT_THROW(score_sequence(r, data[0]), std::invalid_argument);
  r = as_result(data[0]);
  r.sequence_id = "elsewhere";
  EXPECT_THROW(evaluate({r}, data), std::invalid_argument);
}

TEST(MetricsCsv, SchemaAndRoundtrip) {
  const std::vector<CategoryResult> rows{{"car", 10, 55.25, 70.5}, {"mean", 10, 55.25, 70.5}};
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv, "category,frames,success,precision\ncar,10,55.2500,70.5000\nmean,10,55.2500,70.5000\n");
  const auto back = parse_metrics_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].category, "car");
  EXPECT_EQ(back[0].frames, 10u);
  EXPECT_DOUBLE_EQ(back[0].success, 55.25);
  EXPECT_THROW(parse_metrics_csv("category,frames\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv("category,frames,success,precision\ncar,x,1,2\n"), FormatError);
}

TEST(ResultsJson, Roundtrip) {
  const auto data = gen_synthetic(fixture::small_synth(2, 3, 13));
  std::vector<TrackResult> results;
  for (const Sequence& s : data) results.push_back(as_result(s));
  results[0].diagnostics[1].fallback = true;
  const auto back = results_from_json(results_to_json(results));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].sequence_id, results[i].sequence_id);
    EXPECT_EQ(back[i].frame_ids, results[i].frame_ids);
    EXPECT_EQ(back[i].boxes, results[i].boxes);
  }
  EXPECT_TRUE(back[0].diagnostics[1].fallback);
}

TEST(TrackAll, ParallelMatchesSerial) {
  const auto data = gen_synthetic(fixture::small_synth(4, 3, 14));
  const TrackerModel m(fixture::tiny_model(Paradigm::kMotion), 15);
  const auto a = track_all(m, data, 1), b = track_all(m, data, 0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].boxes, b[i].boxes);
}
