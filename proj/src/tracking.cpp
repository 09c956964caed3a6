#include "cutrack/tracking.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cutrack {

using nlohmann::json;

namespace {

// Surface returns sit on the box faces; a small margin keeps the ones that
// noise pushed just outside.
constexpr double kBoxMargin = 1.1;

BBox3D padded(const BBox3D& b) {
  const Extents& e = b.extents();
  return b.with_extents({kBoxMargin * e.w, kBoxMargin * e.h, kBoxMargin * e.l});
}

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t salt) { return seed * 0x9E3779B97F4A7C15ULL ^ (salt + 0x5EED); }

}  // namespace

TrackingInput TrackingInput::from_sequence(const Sequence& seq) {
  seq.validate();
  TrackingInput in;
  in.sequence_id = seq.sequence_id;
  in.category = seq.category;
  in.first_box = seq.target(0);
  in.first_cloud = seq.frames[0].cloud;
  for (const FrameRecord& f : seq.frames) in.frame_ids.push_back(f.frame_id);
  for (std::size_t i = 1; i < seq.frames.size(); ++i) in.clouds.push_back(seq.frames[i].cloud);
  return in;
}

TrackResult track_sequence(Predictor& predictor, const TrackingInput& input) {
  if (input.frame_ids.size() != input.clouds.size() + 1) {
    throw std::invalid_argument("track_sequence: " + std::to_string(input.frame_ids.size()) + " frame ids for " +
                                std::to_string(input.clouds.size() + 1) + " frames");
  }
  TrackResult r;
  r.sequence_id = input.sequence_id;
  r.category = input.category;
  r.frame_ids = input.frame_ids;
  r.boxes.push_back(input.first_box);
  r.diagnostics.push_back({});
  for (std::size_t f = 1; f <= input.clouds.size(); ++f) {
    const PointCloud& prev_cloud = f == 1 ? input.first_cloud : input.clouds[f - 2];
    const PointCloud& cur_cloud = input.clouds[f - 1];
    const BBox3D prev = r.boxes.back();
    if (cur_cloud.empty()) {
      r.boxes.push_back(prev);
      r.diagnostics.push_back({true, false, 0});
      continue;
    }
    const TrackContext ctx{f, input.first_box, input.first_cloud, prev, prev_cloud, cur_cloud};
    Prediction p = predictor.predict(ctx);
    r.boxes.push_back(p.diag.empty_region ? prev : p.box);
    r.diagnostics.push_back(p.diag);
  }
  return r;
}

SiameseInputs prepare_siamese(const ModelConfig& cfg, const BBox3D& first_box, const PointCloud& first_cloud,
                              const BBox3D& reference, const PointCloud& cur_cloud, std::uint64_t seed) {
  SiameseInputs in;
  const BBox3D tbox = padded(first_box);
  in.template_points = sample_region_points(first_cloud, {tbox, 0.0}, cfg.n_t, frame_seed(seed, 1)).points;
  in.template_extents = first_box.extents();
  in.region = region_for(cfg, reference);
  in.search = sample_region_points(cur_cloud, in.region, cfg.n_s, frame_seed(seed, 2));
  return in;
}

MotionInputs prepare_motion(const ModelConfig& cfg, const BBox3D& reference, const PointCloud& prev_cloud,
                            const PointCloud& cur_cloud, std::uint64_t seed) {
  MotionInputs in;
  in.region = region_for(cfg, reference);
  in.prev = sample_region_points(prev_cloud, in.region, cfg.n_s, frame_seed(seed, 3));
  in.cur = sample_region_points(cur_cloud, in.region, cfg.n_s, frame_seed(seed, 4));
  const BBox3D local(Vec3{}, padded(reference).extents(), 0.0);
  in.prev_mask.resize(in.prev.points.size());
  for (std::size_t i = 0; i < in.prev.points.size(); ++i) {
    in.prev_mask[i] = !in.prev.empty && point_in_box(in.prev.points[i], local) ? 1 : 0;
  }
  return in;
}

BBox3D siamese_box(const SiameseOutput& out, const RegionSpec& region, const Extents& template_extents) {
  const Proposal& best = out.proposals[select_best_proposal(out.proposals)];
  return {from_canonical(best.center, region.box), template_extents, region.box.yaw() + best.theta};
}

BBox3D motion_box(const MotionOutput& out, const BBox3D& reference, const Extents& template_extents) {
  return {from_canonical(out.delta, reference), template_extents, reference.yaw() + out.dtheta};
}

Prediction ModelPredictor::predict(const TrackContext& ctx) {
  const ModelConfig& cfg = model_->config();
  Tape tape;
  Prediction p;
  if (cfg.paradigm == Paradigm::kSiamese) {
    const SiameseInputs in = prepare_siamese(cfg, ctx.first_box, ctx.first_cloud, ctx.prev_box, ctx.cur_cloud, ctx.frame);
    p.diag.cropped = in.search.cropped;
    if (in.search.empty) {
      p.diag.empty_region = true;
      p.box = ctx.prev_box;
      return p;
    }
    const SiameseOutput out = siamese_forward(tape, *model_, in.template_points, in.template_extents, in.search.points);
    p.box = siamese_box(out, in.region, in.template_extents);
  } else {
    const MotionInputs in = prepare_motion(cfg, ctx.prev_box, ctx.prev_cloud, ctx.cur_cloud, ctx.frame);
    p.diag.cropped = in.cur.cropped;
    if (in.cur.empty) {
      p.diag.empty_region = true;
      p.box = ctx.prev_box;
      return p;
    }
    const MotionOutput out =
        motion_forward(tape, *model_, in.prev.points, in.prev_mask, in.cur.points, ctx.first_box.extents());
    p.diag.fallback = out.fallback;
    p.box = motion_box(out, ctx.prev_box, ctx.first_box.extents());
  }
  return p;
}

TrackResult track_sequence(const TrackerModel& model, const TrackingInput& input) {
  ModelPredictor predictor(model);
  return track_sequence(predictor, input);
}

json results_to_json(const std::vector<TrackResult>& results) {
  json seqs = json::array();
  for (const TrackResult& r : results) {
    json frames = json::array();
    for (std::size_t i = 0; i < r.boxes.size(); ++i) {
      const BBox3D& b = r.boxes[i];
      frames.push_back({{"frame_id", r.frame_ids[i]},
                        {"box",
                         {{"cx", b.center().x},
                          {"cy", b.center().y},
                          {"cz", b.center().z},
                          {"w", b.w()},
                          {"h", b.h()},
                          {"l", b.l()},
                          {"yaw", b.yaw()}}},
                        {"empty_region", r.diagnostics[i].empty_region},
                        {"fallback", r.diagnostics[i].fallback}});
    }
    seqs.push_back({{"sequence_id", r.sequence_id}, {"category", r.category}, {"frames", frames}});
  }
  return {{"sequences", seqs}};
}

std::vector<TrackResult> results_from_json(const json& j) {
  std::vector<TrackResult> out;
  for (const json& s : j.at("sequences")) {
    TrackResult r;
    r.sequence_id = s.at("sequence_id").get<std::string>();
    r.category = s.at("category").get<std::string>();
    for (const json& f : s.at("frames")) {
      const json& b = f.at("box");
      r.frame_ids.push_back(f.at("frame_id").get<std::int64_t>());
      r.boxes.emplace_back(b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("cz").get<double>(),
                           b.at("w").get<double>(), b.at("h").get<double>(), b.at("l").get<double>(),
                           b.at("yaw").get<double>());
      r.diagnostics.push_back({f.value("empty_region", false), f.value("fallback", false), 0});
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct Moments {
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double stddev() const {
    const double m = mean();
    return std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - m * m));
  }
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<LatencyRow> latency_bench(const TrackerModel& model, const std::vector<std::size_t>& sizes,
                                      std::size_t runs, std::size_t warmup) {
  SynthConfig sc;
  sc.sequences = 1;
  sc.frames = 2;
  sc.categories = {default_categories()[0]};
  const Sequence seq = gen_synthetic(sc).front();
  const BBox3D& first = seq.target(0);
  std::vector<LatencyRow> rows;
  for (std::size_t size : sizes) {
    ModelConfig cfg = model.config();
    cfg.n_s = size;
    cfg.n_t = std::max(cfg.n_t, cfg.encoder.stages.front().samples);
    Moments pre, fwd, post;
    for (std::size_t r = 0; r < warmup + runs; ++r) {
      Tape tape;
      auto t0 = std::chrono::steady_clock::now();
      double t_pre = 0, t_fwd = 0, t_post = 0;
      if (cfg.paradigm == Paradigm::kSiamese) {
        const SiameseInputs in = prepare_siamese(cfg, first, seq.frames[0].cloud, first, seq.frames[1].cloud, r);
        t_pre = ms_since(t0);
        t0 = std::chrono::steady_clock::now();
        const SiameseOutput out = siamese_forward(tape, model, in.template_points, in.template_extents, in.search.points);
        t_fwd = ms_since(t0);
        t0 = std::chrono::steady_clock::now();
        volatile double sink = siamese_box(out, in.region, in.template_extents).center().x;
        (void)sink;
        t_post = ms_since(t0);
      } else {
        const MotionInputs in = prepare_motion(cfg, first, seq.frames[0].cloud, seq.frames[1].cloud, r);
        t_pre = ms_since(t0);
        t0 = std::chrono::steady_clock::now();
        const MotionOutput out = motion_forward(tape, model, in.prev.points, in.prev_mask, in.cur.points, first.extents());
        t_fwd = ms_since(t0);
        t0 = std::chrono::steady_clock::now();
        volatile double sink = motion_box(out, first, first.extents()).center().x;
        (void)sink;
        t_post = ms_since(t0);
      }
      if (r < warmup) continue;
      pre.add(t_pre);
      fwd.add(t_fwd);
      post.add(t_post);
    }
    rows.push_back({size, pre.mean(), pre.stddev(), fwd.mean(), fwd.stddev(), post.mean(), post.stddev()});
  }
  return rows;
}

std::string latency_csv(const std::vector<LatencyRow>& rows) {
  std::ostringstream os;
  os << "points,preprocess_mean_ms,preprocess_std_ms,forward_mean_ms,forward_std_ms,postprocess_mean_ms,"
        "postprocess_std_ms\n";
  for (const LatencyRow& r : rows) {
    os << r.points << ',' << r.preprocess_mean_ms << ',' << r.preprocess_std_ms << ',' << r.forward_mean_ms << ','
       << r.forward_std_ms << ',' << r.postprocess_mean_ms << ',' << r.postprocess_std_ms << '\n';
  }
  return os.str();
}

}  // namespace cutrack
