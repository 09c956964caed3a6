#include "cutrack/training.hpp"

#include <cmath>
#include <sstream>

#include "cutrack/serialize.hpp"
#include "cutrack/tracking.hpp"

namespace cutrack {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be non-negative");
  if (steps < 1) throw std::invalid_argument("train: steps must be at least 1");
  if (batch < 1) throw std::invalid_argument("train: batch must be at least 1");
  if (weights.cls < 0 || weights.off < 0 || weights.ang < 0) throw std::invalid_argument("train: loss weights must be non-negative");
  if (center_jitter < 0 || yaw_jitter < 0) throw std::invalid_argument("train: jitter must be non-negative");
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"batch", batch},
          {"steps", steps},
          {"lambda_cls", weights.cls},
          {"lambda_off", weights.off},
          {"lambda_ang", weights.ang},
          {"seed", seed},
          {"center_jitter", center_jitter},
          {"yaw_jitter", yaw_jitter},
          {"fixed_sampling", fixed_sampling}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const char* keys[] = {"lr", "batch", "steps", "lambda_cls", "lambda_off", "lambda_ang",
                               "seed", "center_jitter", "yaw_jitter", "fixed_sampling"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw std::invalid_argument("unknown key train." + it.key());
  }
  TrainConfig c;
  read_field(j, "lr", c.lr, "train.");
  read_field(j, "batch", c.batch, "train.");
  read_field(j, "steps", c.steps, "train.");
  read_field(j, "lambda_cls", c.weights.cls, "train.");
  read_field(j, "lambda_off", c.weights.off, "train.");
  read_field(j, "lambda_ang", c.weights.ang, "train.");
  read_field(j, "seed", c.seed, "train.");
  read_field(j, "center_jitter", c.center_jitter, "train.");
  read_field(j, "yaw_jitter", c.yaw_jitter, "train.");
  read_field(j, "fixed_sampling", c.fixed_sampling, "train.");
  c.validate();
  return c;
}

TrainSample draw_sample(const std::vector<Sequence>& data, const TrainConfig& cfg, Rng& rng) {
  std::size_t usable = 0;
  for (const Sequence& s : data) usable += s.frames.size() > 1 ? 1 : 0;
  if (usable == 0) throw std::invalid_argument("train: no sequence has two or more frames");
  TrainSample s;
  do {
    s.sequence = rng.index(data.size());
  } while (data[s.sequence].frames.size() < 2);
  const Sequence& seq = data[s.sequence];
  s.frame = 1 + rng.index(seq.frames.size() - 1);
  const BBox3D& prev = seq.target(s.frame - 1);
  const Extents& e = prev.extents();
  const Vec3 jitter{rng.normal(0.0, cfg.center_jitter * e.l), rng.normal(0.0, cfg.center_jitter * e.w),
                    rng.normal(0.0, cfg.center_jitter * e.h)};
  s.reference = BBox3D(from_canonical(jitter, prev), e, prev.yaw() + rng.normal(0.0, cfg.yaw_jitter));
  s.seed = cfg.fixed_sampling ? cfg.seed : rng.next();
  return s;
}

SampleLoss sample_loss(Tape& tape, const TrackerModel& model, const Sequence& seq, const TrainSample& s,
                       const LossWeights& w) {
  const ModelConfig& cfg = model.config();
  const BBox3D& first = seq.target(0);
  const BBox3D& gt = seq.target(s.frame);
  SampleLoss out;
  if (cfg.paradigm == Paradigm::kSiamese) {
    const SiameseInputs in =
        prepare_siamese(cfg, first, seq.frames[0].cloud, s.reference, seq.frames[s.frame].cloud, s.seed);
    if (in.search.empty) {
      out.skipped = true;
      return out;
    }
    const SiameseOutput o = siamese_forward(tape, model, in.template_points, in.template_extents, in.search.points);
    const LossTargets t = siamese_targets(cfg, o.seeds, in.region.box, gt, in.template_extents);
    out.terms = loss_total(o.logits, o.offsets, o.theta, t, w);
  } else {
    const MotionInputs in =
        prepare_motion(cfg, s.reference, seq.frames[s.frame - 1].cloud, seq.frames[s.frame].cloud, s.seed);
    if (in.cur.empty) {
      out.skipped = true;
      return out;
    }
    const MotionOutput o = motion_forward(tape, model, in.prev.points, in.prev_mask, in.cur.points, first.extents());
    const LossTargets t =
        motion_targets(cfg, o.seeds, o.seed_is_cur, s.reference, seq.target(s.frame - 1), gt, first.extents());
    out.terms = loss_total(o.seg_logits, o.motion, o.theta, t, w);
  }
  return out;
}

TrainResult train(TrackerModel& model, const std::vector<Sequence>& data, const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  Rng rng(cfg.seed);
  ParameterStore& store = model.params();
  Adam adam(store, {cfg.lr, 0.9, 0.999, 1e-8});
  TrainResult result;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    store.zero_grad();
    StepRecord rec;
    rec.step = step;
    std::size_t used = 0;
    std::vector<TrainSample> batch;
    for (std::size_t b = 0; b < cfg.batch; ++b) batch.push_back(draw_sample(data, cfg, rng));
    try {
      for (const TrainSample& s : batch) {
        Tape tape;
        SampleLoss sl = sample_loss(tape, model, data[s.sequence], s, cfg.weights);
        if (sl.skipped) continue;
        const double loss = sl.terms.total.value()[0];
        if (!std::isfinite(loss)) throw TrainingDiverged(step, "non-finite loss");
        tape.backward(ag::scale(sl.terms.total, 1.0 / static_cast<double>(cfg.batch)));
        rec.loss += loss;
        rec.cls += sl.terms.cls;
        rec.off += sl.terms.off;
        rec.ang += sl.terms.ang;
        rec.no_positive += sl.terms.no_positive ? 1 : 0;
        ++used;
      }
    } catch (const std::domain_error& e) {
      throw TrainingDiverged(step, e.what());
    }
    if (used > 0) {
      const double n = static_cast<double>(used);
      rec.loss /= n;
      rec.cls /= n;
      rec.off /= n;
      rec.ang /= n;
    }
    adam.step();
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!store[i].value.all_finite()) throw TrainingDiverged(step, "non-finite parameter " + store[i].name);
    }
    result.curve.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

std::string loss_curve_csv(const TrainResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "step,loss,cls,off,ang,no_positive\n";
  for (const StepRecord& s : r.curve) {
    os << s.step << ',' << s.loss << ',' << s.cls << ',' << s.off << ',' << s.ang << ',' << s.no_positive << '\n';
  }
  return os.str();
}

}  // namespace cutrack
