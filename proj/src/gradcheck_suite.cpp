#include "cutrack/gradcheck_suite.hpp"

#include <functional>

#include "cutrack/adaformer.hpp"
#include "cutrack/gradcheck.hpp"
#include "cutrack/losses.hpp"
#include "cutrack/trackers.hpp"

namespace cutrack {

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero, for ops with a kink there.
Tensor off_kink(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return t;
}

/// Reduces y to a scalar with fixed random weights so every output component matters.
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum_all(ag::hadamard(y, tape.constant(random_tensor(y.shape(), rng))));
}

SuiteCase check(const std::string& name, const std::function<Var(Tape&, Var)>& op, const Tensor& x,
                double tol = kPrimitiveTolerance) {
  const GradcheckReport r = gradcheck([&](Tape& t, Var v) { return weighted_sum(t, op(t, v), 99); }, x);
  return {name, r.max_rel_error, tol, r.checked, r.worst};
}

/// The scalar losses are checked as they are, without the weighting.
SuiteCase check_scalar(const std::string& name, const std::function<Var(Tape&, Var)>& op, const Tensor& x) {
  const GradcheckReport r = gradcheck(op, x);
  return {name, r.max_rel_error, kPrimitiveTolerance, r.checked, r.worst};
}

}  // namespace

std::vector<SuiteCase> primitive_gradchecks() {
  Rng rng(7);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor c = random_tensor({3, 4}, rng);
  const Tensor row = random_tensor({4}, rng);
  const Tensor cube = random_tensor({2, 3, 4}, rng);
  std::vector<SuiteCase> out;

  out.push_back(check("matmul.lhs", [&](Tape& t, Var x) { return ag::matmul(x, t.constant(b)); }, a));
  out.push_back(check("matmul.rhs", [&](Tape& t, Var x) { return ag::matmul(t.constant(a), x); }, b));
  out.push_back(check("add.lhs", [&](Tape& t, Var x) { return ag::add(x, t.constant(c)); }, a));
  out.push_back(check("add.rhs", [&](Tape& t, Var x) { return ag::add(t.constant(a), x); }, c));
  out.push_back(check("sub.lhs", [&](Tape& t, Var x) { return ag::sub(x, t.constant(c)); }, a));
  out.push_back(check("sub.rhs", [&](Tape& t, Var x) { return ag::sub(t.constant(a), x); }, c));
  out.push_back(check("hadamard.lhs", [&](Tape& t, Var x) { return ag::hadamard(x, t.constant(c)); }, a));
  out.push_back(check("hadamard.rhs", [&](Tape& t, Var x) { return ag::hadamard(t.constant(a), x); }, c));
  out.push_back(check("hadamard.self", [](Tape&, Var x) { return ag::hadamard(x, x); }, a));
  out.push_back(check("scale", [](Tape&, Var x) { return ag::scale(x, -2.5); }, a));
  out.push_back(check("relu", [](Tape&, Var x) { return ag::relu(x); }, off_kink({3, 4}, rng)));
  out.push_back(check("tanh", [](Tape&, Var x) { return ag::tanh(x); }, a));
  out.push_back(check("exp", [](Tape&, Var x) { return ag::exp(x); }, a));
  out.push_back(check("sigmoid", [](Tape&, Var x) { return ag::sigmoid(x); }, a));
  out.push_back(check("clamp", [](Tape&, Var x) { return ag::clamp(x, -0.5, 0.5); },
                      Tensor::matrix(2, 3, {-0.9, -0.3, 0.1, 0.45, 0.7, -0.05})));
  out.push_back(check("softmax.axis0", [](Tape&, Var x) { return ag::softmax(x, 0); }, a));
  out.push_back(check("softmax.axis1", [](Tape&, Var x) { return ag::softmax(x, 1); }, a));
  out.push_back(check("softmax.axis1.rank3", [](Tape&, Var x) { return ag::softmax(x, 1); }, cube));
  out.push_back(check("sum.axis0", [](Tape&, Var x) { return ag::sum(x, 0); }, a));
  out.push_back(check("sum.axis1.rank3", [](Tape&, Var x) { return ag::sum(x, 1); }, cube));
  out.push_back(check("mean.axis1", [](Tape&, Var x) { return ag::mean(x, 1); }, a));
  out.push_back(check("mean.axis2.rank3", [](Tape&, Var x) { return ag::mean(x, 2); }, cube));
  out.push_back(check("sum_all", [](Tape&, Var x) { return ag::sum_all(x); }, a));
  out.push_back(check("concat.axis0", [&](Tape& t, Var x) { return ag::concat({x, t.constant(c), x}, 0); }, a));
  out.push_back(check("concat.axis1", [&](Tape& t, Var x) { return ag::concat({t.constant(c), x}, 1); }, a));
  out.push_back(check("gather_rows", [](Tape&, Var x) {
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    return ag::gather_rows(x, idx);
  }, a));
  out.push_back(check("broadcast_add.lhs", [&](Tape& t, Var x) { return ag::broadcast_add(x, t.constant(row)); }, a));
  out.push_back(check("broadcast_add.rhs", [&](Tape& t, Var x) { return ag::broadcast_add(t.constant(cube), x); }, row));
  out.push_back(check("reshape", [](Tape&, Var x) { return ag::reshape(x, {2, 6}); }, a));

  Tensor raw = random_tensor({3, 6}, rng, -1.0, 1.0);  // scales stay inside the +-ln 3 clamp
  out.push_back(check("deform_params", [](Tape&, Var x) { return ag::deform_params(x); }, raw));
  const Tensor params = [&] {
    Tape t;
    return Tensor(ag::deform_params(t.constant(raw)).value());
  }();
  const Tensor offsets = random_tensor({6, 3}, rng);
  out.push_back(check("transform_offsets.params",
                      [&](Tape& t, Var x) { return ag::transform_offsets(x, t.constant(offsets), 2); }, params));
  out.push_back(check("transform_offsets.offsets",
                      [&](Tape& t, Var x) { return ag::transform_offsets(t.constant(params), x, 2); }, offsets));
  out.push_back(check("transform_offsets.through_raw", [&](Tape& t, Var x) {
    return ag::transform_offsets(ag::deform_params(x), t.constant(offsets), 2);
  }, raw));

  const std::vector<int> labels{1, 0, 0, 1, 1, 0};
  out.push_back(check_scalar("bce_with_logits",
                             [&](Tape&, Var x) { return ag::bce_with_logits(x, labels); },
                             Tensor::matrix(6, 1, {2.0, -1.0, 0.3, -0.7, 4.0, -3.0})));
  const Tensor target = Tensor::matrix(3, 2, {0.0, 0.0, 1.0, -1.0, 0.5, 0.2});
  const std::vector<std::size_t> rows{0, 2};
  out.push_back(check_scalar("smooth_l1", [&](Tape&, Var x) { return ag::smooth_l1(x, target, rows); },
                             Tensor::matrix(3, 2, {0.4, -2.5, 9.0, 9.0, 1.7, 0.1})));
  return out;
}

namespace {

// Zero biases put self-member offsets exactly on a ReLU kink, and a zeroed
// regressor never exercises the deformation path.
void jitter_params(ParameterStore& store, Rng& rng) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const bool regress = store[i].name.find("regress") != std::string::npos;
    for (double& v : store[i].value.data()) v += regress ? rng.uniform(-0.3, 0.3) : rng.uniform(-0.05, 0.05);
  }
}

// Anything added identically to every member's logit cancels in the member
// softmax: the query projection, the key bias and the bias of phi. Their exact
// gradient is zero, so they get an absolute check instead of a ratio of noise.
bool softmax_invariant(const Parameter& p) {
  const std::string& n = p.name;
  return n.find(".attn.q.") != std::string::npos || n.ends_with(".attn.k.bias") || n.ends_with(".attn.phi.bias");
}
bool not_invariant(const Parameter& p) { return !softmax_invariant(p); }

void add_param_cases(std::vector<SuiteCase>& out, const std::string& name, const std::function<Var(Tape&)>& f,
                     ParameterStore& store) {
  const GradcheckReport r = gradcheck_params(f, store, 1e-5, 0, 0, not_invariant);
  out.push_back({name, r.max_rel_error, kCompositeTolerance, r.checked, r.worst});
  const GradcheckReport z = null_gradient_check(f, store, softmax_invariant);
  out.push_back({name + ".softmax_invariant", z.max_rel_error, kNullGradientTolerance, z.checked, z.worst});
}

}  // namespace

std::vector<SuiteCase> block_gradchecks() {
  Rng rng(11);
  PointCloud cloud;
  for (int i = 0; i < 8; ++i) cloud.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  const Tensor feats = random_tensor({8, 4}, rng);
  BlockConfig bc;
  bc.in_dim = 4;
  bc.out_dim = 4;
  bc.k = 4;
  bc.radius = 0.6;
  bc.pos_hidden = 4;
  ParameterStore store;
  AdaFormerBlock block(store, "block", bc, rng);
  jitter_params(store, rng);
  const std::vector<std::size_t> centers{0, 1, 2, 3, 4, 5, 6, 7};
  auto loss = [&](Tape& t, Var f) { return weighted_sum(t, block.forward(t, cloud, f, centers).features, 5); };

  std::vector<SuiteCase> out;
  add_param_cases(out, "adaformer_block.params", [&](Tape& t) { return loss(t, t.constant(feats)); }, store);
  const GradcheckReport rf = gradcheck(loss, feats);
  out.push_back({"adaformer_block.features", rf.max_rel_error, kCompositeTolerance, rf.checked, rf.worst});
  return out;
}

namespace {

ModelConfig toy_model(Paradigm p) {
  ModelConfig cfg;
  cfg.paradigm = p;
  cfg.encoder.in_dim = ModelConfig::input_channels(p);
  std::size_t prev = cfg.encoder.in_dim;
  for (std::size_t s = 0; s < 2; ++s) {
    StageConfig st;
    st.samples = s == 0 ? 16 : 8;
    st.block = {prev, 8, 4, s == 0 ? 0.5 : 1.0, 4, true};
    cfg.encoder.stages.push_back(st);
    prev = 8;
  }
  cfg.head_hidden = {8};
  cfg.beta = 0.8;
  cfg.n_t = 32;
  cfg.n_s = p == Paradigm::kSiamese ? 32 : 16;
  return cfg;
}

PointCloud toy_cloud(std::size_t n, Rng& rng) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  return c;
}

}  // namespace

std::vector<SuiteCase> head_gradchecks() {
  std::vector<SuiteCase> out;
  Rng rng(13);
  const BBox3D gt({0.1, -0.05, 0.0}, {1.6, 1.6, 1.8}, 0.1);
  const BBox3D region({0.0, 0.0, 0.0}, {3.2, 3.2, 3.6}, 0.0);
  {
    TrackerModel model(toy_model(Paradigm::kSiamese), 21);
    jitter_params(model.params(), rng);
    const PointCloud tmpl = toy_cloud(32, rng);
    const PointCloud search = toy_cloud(32, rng);
    const Extents te = gt.extents();
    auto f = [&](Tape& t) {
      const SiameseOutput o = siamese_forward(t, model, tmpl, te, search);
      const LossTargets tg = siamese_targets(model.config(), o.seeds, region, gt, te);
      return loss_total(o.logits, o.offsets, o.theta, tg, {}).total;
    };
    add_param_cases(out, "siamese_head.loss", f, model.params());
  }
  {
    TrackerModel model(toy_model(Paradigm::kMotion), 22);
    jitter_params(model.params(), rng);
    const PointCloud prev = toy_cloud(16, rng);
    const PointCloud cur = toy_cloud(16, rng);
    std::vector<int> mask(16);
    for (std::size_t i = 0; i < 16; ++i) mask[i] = i % 2 == 0 ? 1 : 0;
    const BBox3D prev_gt({0.0, 0.0, 0.0}, gt.extents(), 0.0);
    auto f = [&](Tape& t) {
      const MotionOutput o = motion_forward(t, model, prev, mask, cur, gt.extents());
      const LossTargets tg = motion_targets(model.config(), o.seeds, o.seed_is_cur, region, prev_gt, gt, gt.extents());
      return loss_total(o.seg_logits, o.motion, o.theta, tg, {}).total;
    };
    add_param_cases(out, "motion_head.loss", f, model.params());
  }
  return out;
}

std::vector<SuiteCase> full_gradcheck_suite() {
  std::vector<SuiteCase> all = primitive_gradchecks();
  for (auto&& c : block_gradchecks()) all.push_back(std::move(c));
  for (auto&& c : head_gradchecks()) all.push_back(std::move(c));
  return all;
}

}  // namespace cutrack
