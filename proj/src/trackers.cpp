#include "cutrack/trackers.hpp"

#include <cmath>
#include <stdexcept>

#include "cutrack/losses.hpp"
#include "cutrack/serialize.hpp"

namespace cutrack {

using nlohmann::json;

std::string to_string(Paradigm p) { return p == Paradigm::kSiamese ? "siamese" : "motion"; }

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "siamese") return Paradigm::kSiamese;
  if (s == "motion") return Paradigm::kMotion;
  throw std::invalid_argument("unknown paradigm '" + s + "' (expected siamese or motion)");
}

ModelConfig ModelConfig::desk_default(Paradigm p) {
  ModelConfig cfg;
  cfg.paradigm = p;
  cfg.encoder.in_dim = input_channels(p);
  const std::size_t samples[3] = {128, 64, 32};
  const double radii[3] = {0.3, 0.6, 1.2};
  const std::size_t dims[3] = {16, 32, 64};
  std::size_t prev = cfg.encoder.in_dim;
  for (std::size_t s = 0; s < 3; ++s) {
    StageConfig st;
    st.samples = samples[s];
    st.block.in_dim = prev;
    st.block.out_dim = dims[s];
    st.block.k = 8;
    st.block.radius = radii[s];
    st.block.pos_hidden = 16;
    cfg.encoder.stages.push_back(st);
    prev = dims[s];
  }
  if (p == Paradigm::kMotion) cfg.n_s = 128;
  return cfg;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (encoder.in_dim != input_channels(paradigm)) {
    throw std::invalid_argument("model: encoder in_dim must be " + std::to_string(input_channels(paradigm)) +
                                " for the " + to_string(paradigm) + " head");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("model: alpha must be positive");
  if (!(beta > 0.0)) throw std::invalid_argument("model: beta must be positive");
  if (n_t < 1 || n_s < 1) throw std::invalid_argument("model: n_t and n_s must be positive");
  const std::size_t first = encoder.stages.front().samples;
  if (paradigm == Paradigm::kSiamese && (n_t < first || n_s < first)) {
    throw std::invalid_argument("model: n_t and n_s must be at least the first stage's sample count");
  }
  if (paradigm == Paradigm::kMotion && 2 * n_s < first) {
    throw std::invalid_argument("model: 2 n_s must be at least the first stage's sample count");
  }
  if (!(seg_threshold > 0.0 && seg_threshold < 1.0)) {
    throw std::invalid_argument("model: seg_threshold must lie in (0, 1)");
  }
}

namespace {

json encoder_to_json(const EncoderConfig& e) {
  json stages = json::array();
  for (const StageConfig& s : e.stages) {
    stages.push_back({{"samples", s.samples},
                      {"out_dim", s.block.out_dim},
                      {"k", s.block.k},
                      {"radius", s.block.radius},
                      {"pos_hidden", s.block.pos_hidden}});
  }
  return {{"stages", stages}};
}

EncoderConfig encoder_from_json(const json& j, std::size_t in_dim, bool deform) {
  EncoderConfig e;
  e.in_dim = in_dim;
  std::size_t prev = in_dim;
  for (const json& s : j.at("stages")) {
    StageConfig st;
    st.samples = s.at("samples").get<std::size_t>();
    st.block.in_dim = prev;
    st.block.out_dim = s.at("out_dim").get<std::size_t>();
    st.block.k = s.at("k").get<std::size_t>();
    st.block.radius = s.at("radius").get<double>();
    st.block.pos_hidden = s.at("pos_hidden").get<std::size_t>();
    st.block.deform = deform;
    e.stages.push_back(st);
    prev = st.block.out_dim;
  }
  return e;
}

}  // namespace

json ModelConfig::to_json() const {
  return {{"paradigm", to_string(paradigm)},
          {"encoder", encoder_to_json(encoder)},
          {"head_hidden", head_hidden},
          {"alpha", alpha},
          {"beta", beta},
          {"n_t", n_t},
          {"n_s", n_s},
          {"seg_threshold", seg_threshold},
          {"ablation",
           {{"adaformer_on", ablation.adaformer},
            {"unified_inputs_on", ablation.unified_inputs},
            {"unified_objective_on", ablation.unified_objective}}}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig cfg;
  cfg.paradigm = paradigm_from_string(j.at("paradigm").get<std::string>());
  const json& ab = j.at("ablation");
  cfg.ablation.adaformer = ab.at("adaformer_on").get<bool>();
  cfg.ablation.unified_inputs = ab.at("unified_inputs_on").get<bool>();
  cfg.ablation.unified_objective = ab.at("unified_objective_on").get<bool>();
  cfg.encoder = encoder_from_json(j.at("encoder"), input_channels(cfg.paradigm), cfg.ablation.adaformer);
  cfg.head_hidden = j.at("head_hidden").get<std::vector<std::size_t>>();
  cfg.alpha = j.at("alpha").get<double>();
  cfg.beta = j.at("beta").get<double>();
  cfg.n_t = j.at("n_t").get<std::size_t>();
  cfg.n_s = j.at("n_s").get<std::size_t>();
  cfg.seg_threshold = j.at("seg_threshold").get<double>();
  cfg.validate();
  return cfg;
}

RegionSpec region_for(const ModelConfig& cfg, const BBox3D& reference) {
  return cfg.ablation.unified_inputs ? make_search_region(reference, cfg.alpha)
                                     : make_fixed_margin_region(reference, kFixedMarginM);
}

Vec3 encode_offset(const ModelConfig& cfg, const Vec3& delta, const Extents& extents) {
  return cfg.ablation.unified_objective ? normalize_offset(delta, extents) : delta;
}

Vec3 decode_offset(const ModelConfig& cfg, const Vec3& encoded, const Extents& extents) {
  return cfg.ablation.unified_objective ? denormalize_offset(encoded, extents) : encoded;
}

std::vector<int> target_labels(const ModelConfig& cfg, const PointCloud& target_canonical, const Extents& extents) {
  return cfg.ablation.unified_objective ? shape_aware_labels(target_canonical, extents, cfg.beta)
                                        : distance_labels(target_canonical, kFixedLabelRadiusM);
}

TrackerModel::TrackerModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.encoder.in_dim = ModelConfig::input_channels(cfg_.paradigm);
  for (StageConfig& s : cfg_.encoder.stages) s.block.deform = cfg_.ablation.adaformer;
  cfg_.validate();
  Rng rng(seed);
  encoder_ = Encoder(store_, "encoder", cfg_.encoder, rng);
  const std::size_t d = cfg_.encoder.out_dim();
  auto widths = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), cfg_.head_hidden.begin(), cfg_.head_hidden.end());
    dims.push_back(out);
    return dims;
  };
  if (cfg_.paradigm == Paradigm::kSiamese) {
    // [seed feature; pooled template feature; seed position] -> [offset(3), theta, logit]
    seed_head_ = Mlp(store_, "head.seed", widths(2 * d + 3, 5), rng);
  } else {
    seg_head_ = Mlp(store_, "head.seg", widths(d, 1), rng);
    // [pooled previous foreground; pooled current foreground] -> [motion(3), dtheta]
    motion_head_ = Mlp(store_, "head.motion", widths(2 * d, 4), rng);
  }
}

void TrackerModel::save(const std::filesystem::path& manifest) const {
  save_cutm(manifest, store_, {{"model", cfg_.to_json()}});
}

TrackerModel TrackerModel::load(const std::filesystem::path& manifest) {
  const json m = read_cutm_manifest(manifest);
  if (!m.contains("metadata") || !m["metadata"].contains("model")) {
    throw FormatError("model file " + manifest.string() + " has no model configuration");
  }
  TrackerModel model(ModelConfig::from_json(m["metadata"]["model"]), 0);
  load_cutm_params(manifest, model.store_);
  return model;
}

namespace {

Tensor points_tensor(const PointCloud& pts, std::size_t channels) {
  Tensor t({pts.size(), channels});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.at(i, 0) = pts[i].x;
    t.at(i, 1) = pts[i].y;
    t.at(i, 2) = pts[i].z;
  }
  return t;
}

/// Maps final-stage seeds back to indices of the encoder input.
std::vector<std::size_t> seed_input_indices(const EncoderOutput& enc) {
  std::vector<std::size_t> idx = enc.stages.front().indices;
  for (std::size_t s = 1; s < enc.stages.size(); ++s) {
    std::vector<std::size_t> next;
    next.reserve(enc.stages[s].indices.size());
    for (std::size_t i : enc.stages[s].indices) next.push_back(idx[i]);
    idx = std::move(next);
  }
  return idx;
}

Var row_mean(Var x, std::span<const std::size_t> rows) {
  Var g = ag::gather_rows(x, rows);
  return ag::reshape(ag::mean(g, 0), {1, x.value().dim(1)});
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

SiameseOutput siamese_forward(Tape& tape, const TrackerModel& model, const PointCloud& template_points,
                              const Extents& template_extents, const PointCloud& search_points) {
  const ModelConfig& cfg = model.config();
  if (cfg.paradigm != Paradigm::kSiamese) throw std::invalid_argument("siamese_forward: model is a motion head");
  const EncoderOutput tmpl = model.encoder().forward(tape, template_points, tape.constant(points_tensor(template_points, 3)));
  const EncoderOutput srch = model.encoder().forward(tape, search_points, tape.constant(points_tensor(search_points, 3)));

  SiameseOutput out;
  out.seeds = srch.last().points;
  const std::size_t m = out.seeds.size();
  const Var tmpl_feats = tmpl.last().features;
  std::vector<std::size_t> all(tmpl_feats.value().dim(0));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Var pooled = row_mean(tmpl_feats, all);
  const Var tiled = ag::gather_rows(pooled, std::vector<std::size_t>(m, 0));
  Tensor pos({m, 3});
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 p = encode_offset(cfg, out.seeds[i], template_extents);
    pos.at(i, 0) = p.x;
    pos.at(i, 1) = p.y;
    pos.at(i, 2) = p.z;
  }
  const Var head_in = ag::concat({srch.last().features, tiled, tape.constant(std::move(pos))}, 1);
  const Var raw = model.seed_head().forward(tape, head_in);

  // Column slices as products with constant selector matrices.
  auto columns = [&](std::size_t c0, std::size_t n) {
    Tensor sel({5, n});
    for (std::size_t c = 0; c < n; ++c) sel.at(c0 + c, c) = 1.0;
    return ag::matmul(raw, tape.constant(std::move(sel)));
  };
  out.offsets = columns(0, 3);
  out.theta = ag::scale(ag::tanh(columns(3, 1)), kMaxDeltaYaw);
  out.logits = columns(4, 1);

  out.proposals.resize(m);
  const Tensor& o = out.offsets.value();
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 d = decode_offset(cfg, {o.at(i, 0), o.at(i, 1), o.at(i, 2)}, template_extents);
    out.proposals[i].center = out.seeds[i] + d;
    out.proposals[i].theta = out.theta.value()[i];
    out.proposals[i].score = sigmoid(out.logits.value()[i]);
  }
  return out;
}

std::size_t select_best_proposal(std::span<const Proposal> proposals) {
  if (proposals.empty()) throw std::invalid_argument("select_best_proposal: no proposals");
  std::size_t best = 0;
  for (std::size_t i = 1; i < proposals.size(); ++i) {
    if (proposals[i].score > proposals[best].score) best = i;
  }
  return best;
}

MotionOutput motion_forward(Tape& tape, const TrackerModel& model, const PointCloud& prev_points,
                            std::span<const int> prev_mask, const PointCloud& cur_points,
                            const Extents& template_extents) {
  const ModelConfig& cfg = model.config();
  if (cfg.paradigm != Paradigm::kMotion) throw std::invalid_argument("motion_forward: model is a Siamese head");
  if (prev_mask.size() != prev_points.size()) {
    throw std::invalid_argument("motion_forward: prior mask has " + std::to_string(prev_mask.size()) +
                                " entries for " + std::to_string(prev_points.size()) + " points");
  }
  PointCloud cloud = prev_points;
  cloud.insert(cloud.end(), cur_points.begin(), cur_points.end());
  Tensor feats = points_tensor(cloud, 5);
  for (std::size_t i = 0; i < prev_points.size(); ++i) feats.at(i, 3) = prev_mask[i] ? 1.0 : 0.0;
  for (std::size_t i = prev_points.size(); i < cloud.size(); ++i) feats.at(i, 4) = 1.0;

  const EncoderOutput enc = model.encoder().forward(tape, cloud, tape.constant(std::move(feats)));
  MotionOutput out;
  out.seeds = enc.last().points;
  for (std::size_t i : seed_input_indices(enc)) out.seed_is_cur.push_back(i >= prev_points.size() ? 1 : 0);

  const Var f = enc.last().features;
  out.seg_logits = model.seg_head().forward(tape, f);
  const double logit_thr = std::log(cfg.seg_threshold / (1.0 - cfg.seg_threshold));
  std::vector<Var> pools;
  for (int frame = 0; frame < 2; ++frame) {
    std::vector<std::size_t> fg, any;
    for (std::size_t i = 0; i < out.seeds.size(); ++i) {
      if (out.seed_is_cur[i] != frame) continue;
      any.push_back(i);
      if (out.seg_logits.value()[i] > logit_thr) fg.push_back(i);
    }
    if (fg.empty()) {
      out.fallback = true;
      fg = any;
    }
    if (fg.empty()) {
      // FPS kept no seed of this frame; pool over everything.
      for (std::size_t i = 0; i < out.seeds.size(); ++i) fg.push_back(i);
    }
    pools.push_back(row_mean(f, fg));
  }
  const Var raw = model.motion_head().forward(tape, ag::concat(pools, 1));
  Tensor sel_m({4, 3});
  for (std::size_t c = 0; c < 3; ++c) sel_m.at(c, c) = 1.0;
  Tensor sel_t({4, 1});
  sel_t.at(3, 0) = 1.0;
  out.motion = ag::matmul(raw, tape.constant(std::move(sel_m)));
  out.theta = ag::scale(ag::tanh(ag::matmul(raw, tape.constant(std::move(sel_t)))), kMaxDeltaYaw);
  const Tensor& mv = out.motion.value();
  out.delta = decode_offset(cfg, {mv[0], mv[1], mv[2]}, template_extents);
  out.dtheta = out.theta.value()[0];
  return out;
}

LossTerms loss_total(Var logits, Var offsets, Var theta, const LossTargets& targets, const LossWeights& w) {
  LossTerms terms;
  const Var cls = ag::bce_with_logits(logits, targets.labels);
  terms.cls = cls.value()[0];
  Var total = ag::scale(cls, w.cls);
  if (targets.rows.empty()) {
    terms.no_positive = true;
  } else {
    const Var off = ag::smooth_l1(offsets, targets.offsets, targets.rows);
    const Var ang = ag::smooth_l1(theta, targets.theta, targets.rows);
    terms.off = off.value()[0];
    terms.ang = ang.value()[0];
    total = ag::add(total, ag::add(ag::scale(off, w.off), ag::scale(ang, w.ang)));
  }
  terms.total = total;
  return terms;
}

LossTargets siamese_targets(const ModelConfig& cfg, const PointCloud& seeds, const BBox3D& region_box,
                            const BBox3D& gt, const Extents& template_extents) {
  LossTargets t;
  const PointCloud world = from_canonical(seeds, region_box);
  t.labels = target_labels(cfg, to_canonical(world, gt), gt.extents());
  const Vec3 c = to_canonical(gt.center(), region_box);
  const double dtheta = wrap_angle(gt.yaw() - region_box.yaw());
  t.offsets = Tensor({seeds.size(), 3});
  t.theta = Tensor({seeds.size(), 1}, dtheta);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const Vec3 e = encode_offset(cfg, c - seeds[i], template_extents);
    t.offsets.at(i, 0) = e.x;
    t.offsets.at(i, 1) = e.y;
    t.offsets.at(i, 2) = e.z;
    if (t.labels[i]) t.rows.push_back(i);
  }
  return t;
}

LossTargets motion_targets(const ModelConfig& cfg, const PointCloud& seeds, std::span<const int> seed_is_cur,
                           const BBox3D& reference, const BBox3D& prev_gt, const BBox3D& cur_gt,
                           const Extents& template_extents) {
  LossTargets t;
  t.labels.resize(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const BBox3D& gt = seed_is_cur[i] ? cur_gt : prev_gt;
    const Vec3 p = to_canonical(from_canonical(seeds[i], reference), gt);
    t.labels[i] = target_labels(cfg, PointCloud{p}, gt.extents())[0];
  }
  const Vec3 e = encode_offset(cfg, to_canonical(cur_gt.center(), reference), template_extents);
  t.offsets = Tensor::matrix(1, 3, {e.x, e.y, e.z});
  t.theta = Tensor::matrix(1, 1, {wrap_angle(cur_gt.yaw() - reference.yaw())});
  t.rows = {0};
  return t;
}

}  // namespace cutrack
