#include "cutrack/adaformer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cutrack {

namespace {

using kernels::Mat3;

const double kLogMaxScale = std::log(kMaxDeformScale);

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[3 * i + k] * b[3 * k + j];
      c[3 * i + j] = s;
    }
  }
  return c;
}

Mat3 rot_x(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {1, 0, 0, 0, c, -s, 0, s, c};
}
Mat3 rot_y(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {c, 0, -s, 0, 1, 0, s, 0, c};
}
Mat3 rot_z(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}
Mat3 drot_x(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {0, 0, 0, 0, -s, -c, 0, c, -s};
}
Mat3 drot_y(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {-s, 0, -c, 0, 0, 0, c, 0, -s};
}
Mat3 drot_z(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return {-s, -c, 0, c, -s, 0, 0, 0, 0};
}
Mat3 diag(double a, double b, double c) { return {a, 0, 0, 0, b, 0, 0, 0, c}; }

// T and its partial derivatives with respect to the six parameters.
struct TransformJet {
  Mat3 t;
  std::array<Mat3, 6> d;
};

TransformJet transform_jet(const DeformParams& p) {
  const Mat3 s = diag(p.sx, p.sy, p.sz);
  const Mat3 rx = rot_x(p.theta_x), ry = rot_y(p.theta_y), rz = rot_z(p.theta_z);
  const Mat3 ryz = mul(ry, rz);
  const Mat3 r = mul(rx, ryz);
  TransformJet j;
  j.t = mul(s, r);
  j.d[0] = mul(diag(1, 0, 0), r);
  j.d[1] = mul(diag(0, 1, 0), r);
  j.d[2] = mul(diag(0, 0, 1), r);
  j.d[3] = mul(s, mul(drot_x(p.theta_x), ryz));
  j.d[4] = mul(s, mul(rx, mul(drot_y(p.theta_y), rz)));
  j.d[5] = mul(s, mul(mul(rx, ry), drot_z(p.theta_z)));
  return j;
}

Tensor offsets_tensor(const PointCloud& cloud, std::span<const GroupIndex> groups, std::size_t k, double radius) {
  Tensor t({groups.size() * k, 3});
  const double inv_r = 1.0 / radius;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const Vec3 c = cloud[static_cast<std::size_t>(groups[j].center_index)];
    for (std::size_t i = 0; i < k; ++i) {
      const Vec3 d = inv_r * (c - cloud[groups[j].member_indices[i]]);
      const std::size_t r = j * k + i;
      t.at(r, 0) = d.x;
      t.at(r, 1) = d.y;
      t.at(r, 2) = d.z;
    }
  }
  return t;
}

std::vector<std::size_t> flat_members(std::span<const GroupIndex> groups) {
  std::vector<std::size_t> out;
  for (const auto& g : groups) out.insert(out.end(), g.member_indices.begin(), g.member_indices.end());
  return out;
}

std::vector<std::size_t> repeat_rows(std::size_t m, std::size_t k) {
  std::vector<std::size_t> out(m * k);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = r / k;
  return out;
}

}  // namespace

DeformParams DeformParams::from_row(std::span<const double> row) {
  if (row.size() != 6) throw std::invalid_argument("DeformParams: expected 6 values");
  return {row[0], row[1], row[2], row[3], row[4], row[5]};
}

double DeformTransform::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

DeformParams params_from_raw(std::span<const double> raw) {
  if (raw.size() != 6) throw std::invalid_argument("params_from_raw: expected 6 values");
  DeformParams p;
  p.sx = std::exp(std::clamp(raw[0], -kLogMaxScale, kLogMaxScale));
  p.sy = std::exp(std::clamp(raw[1], -kLogMaxScale, kLogMaxScale));
  p.sz = std::exp(std::clamp(raw[2], -kLogMaxScale, kLogMaxScale));
  p.theta_x = std::numbers::pi * std::tanh(raw[3]);
  p.theta_y = std::numbers::pi * std::tanh(raw[4]);
  p.theta_z = std::numbers::pi * std::tanh(raw[5]);
  return p;
}

DeformTransform build_transform(const DeformParams& p) {
  return {mul(diag(p.sx, p.sy, p.sz), mul(rot_x(p.theta_x), mul(rot_y(p.theta_y), rot_z(p.theta_z))))};
}

GroupIndex deform_group(const PointCloud& cloud, std::size_t center_index, const DeformTransform& t, double r,
                        std::size_t k) {
  return kernels::transformed_ball_query(cloud, center_index, t.m, r, k);
}

namespace ag {

Var deform_params(Var raw) {
  const Tensor& x = raw.value();
  if (x.rank() != 2 || x.dim(1) != 6) {
    throw std::invalid_argument("deform_params: expected [m x 6], got " + shape_str(x.shape()));
  }
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    const DeformParams p = params_from_raw(x.data().subspan(r * 6, 6));
    const std::array<double, 6> v{p.sx, p.sy, p.sz, p.theta_x, p.theta_y, p.theta_z};
    std::copy(v.begin(), v.end(), y.data().begin() + static_cast<std::ptrdiff_t>(r * 6));
  }
  const int ia = raw.id;
  return raw.tape->record(std::move(y), {ia}, [ia](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t c = i % 6;
      if (c < 3) {
        const bool inside = x[i] >= -kLogMaxScale && x[i] <= kLogMaxScale;
        gx[i] += inside ? g[i] * y[i] : 0.0;
      } else {
        const double th = std::tanh(x[i]);
        gx[i] += g[i] * std::numbers::pi * (1.0 - th * th);
      }
    }
  });
}

Var transform_offsets(Var params, Var offsets, std::size_t k) {
  const Tensor& P = params.value();
  const Tensor& O = offsets.value();
  if (P.rank() != 2 || P.dim(1) != 6 || O.rank() != 2 || O.dim(1) != 3 || k == 0 || O.dim(0) != P.dim(0) * k) {
    throw std::invalid_argument("transform_offsets: incompatible shapes " + shape_str(P.shape()) + " and " +
                                shape_str(O.shape()));
  }
  const std::size_t m = P.dim(0);
  std::vector<TransformJet> jets;
  jets.reserve(m);
  for (std::size_t j = 0; j < m; ++j) jets.push_back(transform_jet(DeformParams::from_row(P.data().subspan(j * 6, 6))));
  Tensor Y(O.shape());
  for (std::size_t r = 0; r < O.dim(0); ++r) {
    const Vec3 v = kernels::transform_point(jets[r / k].t, {O.at(r, 0), O.at(r, 1), O.at(r, 2)});
    Y.at(r, 0) = v.x;
    Y.at(r, 1) = v.y;
    Y.at(r, 2) = v.z;
  }
  const int ip = params.id, io = offsets.id;
  return params.tape->record(std::move(Y), {ip, io}, [ip, io, k, jets = std::move(jets)](Tape& t, int self) {
    const Tensor& G = t.grad(self);
    const Tensor& O = t.value(io);
    const bool want_p = t.requires_grad(ip);
    const bool want_o = t.requires_grad(io);
    for (std::size_t r = 0; r < O.dim(0); ++r) {
      const TransformJet& jet = jets[r / k];
      const Vec3 g{G.at(r, 0), G.at(r, 1), G.at(r, 2)};
      const Vec3 o{O.at(r, 0), O.at(r, 1), O.at(r, 2)};
      if (want_p) {
        Tensor& gp = t.grad(ip);
        for (std::size_t a = 0; a < 6; ++a) gp.at(r / k, a) += g.dot(kernels::transform_point(jet.d[a], o));
      }
      if (want_o) {
        Tensor& go = t.grad(io);
        const Mat3& m = jet.t;
        go.at(r, 0) += m[0] * g.x + m[3] * g.y + m[6] * g.z;
        go.at(r, 1) += m[1] * g.x + m[4] * g.y + m[7] * g.z;
        go.at(r, 2) += m[2] * g.x + m[5] * g.y + m[8] * g.z;
      }
    }
  });
}

}  // namespace ag

EncoderConfig EncoderConfig::toy_default(std::size_t in_dim) {
  EncoderConfig cfg;
  cfg.in_dim = in_dim;
  const std::array<std::size_t, 3> samples{128, 64, 32};
  const std::array<double, 3> radii{0.3, 0.6, 1.2};
  const std::array<std::size_t, 3> dims{32, 64, 128};
  std::size_t prev = in_dim;
  for (std::size_t s = 0; s < 3; ++s) {
    StageConfig st;
    st.samples = samples[s];
    st.block.in_dim = prev;
    st.block.out_dim = dims[s];
    st.block.k = 16;
    st.block.radius = radii[s];
    st.block.pos_hidden = 16;
    cfg.stages.push_back(st);
    prev = dims[s];
  }
  return cfg;
}

void EncoderConfig::validate() const {
  if (in_dim == 0) throw std::invalid_argument("encoder: in_dim must be positive");
  if (stages.empty()) throw std::invalid_argument("encoder: at least one stage required");
  std::size_t prev_dim = in_dim;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    const std::string where = "encoder stage " + std::to_string(s) + ": ";
    if (st.samples == 0) throw std::invalid_argument(where + "samples must be positive");
    if (s > 0 && st.samples >= stages[s - 1].samples) throw std::invalid_argument(where + "samples must decrease");
    if (st.block.in_dim != prev_dim) throw std::invalid_argument(where + "in_dim does not match previous out_dim");
    if (st.block.k == 0 || st.block.out_dim == 0 || st.block.pos_hidden == 0) {
      throw std::invalid_argument(where + "k, out_dim and pos_hidden must be positive");
    }
    if (!(st.block.radius > 0.0)) throw std::invalid_argument(where + "radius must be positive");
    prev_dim = st.block.out_dim;
  }
}

GroupRegressor::GroupRegressor(ParameterStore& store, const std::string& name, std::size_t feat_dim, Rng& rng)
    : mlp_(store, name, {feat_dim + 3, feat_dim + 3, 6}, rng) {
  // Start from the identity transform: every group begins as the default ball.
  for (double& v : mlp_.layers().back().weight().value.data()) v = 0.0;
}

Var GroupRegressor::forward(Tape& tape, Var group_feats) const {
  return mlp_.forward(tape, ag::mean(group_feats, 1));
}

DeformParams regress_deform(Tape& tape, const GroupRegressor& reg, Var group_feats) {
  const Shape s = group_feats.shape();
  if (s.size() != 2) throw std::invalid_argument("regress_deform: expected [k x (dim+3)], got " + shape_str(s));
  Var raw = reg.forward(tape, ag::reshape(group_feats, {1, s[0], s[1]}));
  return DeformParams::from_row(ag::deform_params(raw).value().data());
}

PositionEmbedding::PositionEmbedding(ParameterStore& store, const std::string& name, std::size_t hidden,
                                     std::size_t out_dim, Rng& rng)
    : mlp_(store, name, {3, hidden, out_dim}, rng) {}

Var PositionEmbedding::forward(Tape& tape, Var offsets) const { return mlp_.forward(tape, offsets); }

Var position_embed(Tape& tape, const PositionEmbedding& pe, const Vec3& center, std::span<const Vec3> members) {
  if (members.empty()) throw std::invalid_argument("position_embed: no members");
  Tensor off({members.size(), 3});
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Vec3 d = center - members[i];
    off.at(i, 0) = d.x;
    off.at(i, 1) = d.y;
    off.at(i, 2) = d.z;
  }
  return pe.forward(tape, tape.constant(std::move(off)));
}

VectorAttention::VectorAttention(ParameterStore& store, const std::string& name, std::size_t in_dim,
                                 std::size_t dim, Rng& rng)
    : wq_(store, name + ".q", in_dim, dim, rng),
      wk_(store, name + ".k", in_dim, dim, rng),
      wv_(store, name + ".v", in_dim, dim, rng),
      phi_(store, name + ".phi", dim, dim, rng) {}

Var VectorAttention::weights(Tape& tape, Var queries, Var keys, Var pos, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("vector attention: group is empty");
  const std::size_t m = queries.shape().at(0);
  if (keys.shape().at(0) != m * k || pos.shape().at(0) != m * k) {
    throw std::invalid_argument("vector attention: expected " + std::to_string(m * k) + " member rows, got keys " +
                                shape_str(keys.shape()) + " pos " + shape_str(pos.shape()));
  }
  const auto rep = repeat_rows(m, k);
  Var q = ag::gather_rows(wq_.forward(tape, queries), rep);
  Var logits = phi_.forward(tape, ag::add(ag::sub(q, wk_.forward(tape, keys)), pos));
  const std::size_t d = logits.shape()[1];
  return ag::softmax(ag::reshape(logits, {m, k, d}), 1);
}

Var VectorAttention::forward(Tape& tape, Var queries, Var keys, Var values, Var pos, std::size_t k) const {
  Var w = weights(tape, queries, keys, pos, k);
  const std::size_t m = w.shape()[0];
  const std::size_t d = w.shape()[2];
  Var v = ag::reshape(ag::add(wv_.forward(tape, values), pos), {m, k, d});
  return ag::sum(ag::hadamard(w, v), 1);
}

Var group_vector_attention(Tape& tape, const VectorAttention& va, Var q, Var keys, Var values, Var pos) {
  const std::size_t k = keys.shape().at(0);
  if (k == 0) throw std::invalid_argument("group_vector_attention: k = 0");
  Var q2 = q.shape().size() == 1 ? ag::reshape(q, {1, q.shape()[0]}) : q;
  return ag::reshape(va.forward(tape, q2, keys, values, pos, k), {pos.shape().at(1)});
}

AdaFormerBlock::AdaFormerBlock(ParameterStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng)
    : cfg_(cfg),
      name_(name),
      pos_(store, name + ".pos", cfg.pos_hidden, cfg.out_dim, rng),
      attention_(store, name + ".attn", cfg.in_dim, cfg.out_dim, rng),
      residual_(store, name + ".residual", cfg.in_dim, cfg.out_dim, rng),
      out_mlp_(store, name + ".out", {cfg.out_dim, cfg.out_dim, cfg.out_dim}, rng) {
  // Registered even when deformation is off so both ablation arms share one parameter layout.
  regressor_ = GroupRegressor(store, name + ".regress", cfg.in_dim, rng);
}

BlockOutput AdaFormerBlock::forward(Tape& tape, const PointCloud& cloud, Var feats,
                                    std::span<const std::size_t> centers) const {
  if (feats.shape().size() != 2 || feats.shape()[0] != cloud.size() || feats.shape()[1] != cfg_.in_dim) {
    throw std::invalid_argument(name_ + ": features " + shape_str(feats.shape()) + " do not match cloud of " +
                                std::to_string(cloud.size()) + " points with dim " + std::to_string(cfg_.in_dim));
  }
  if (centers.empty()) throw std::invalid_argument(name_ + ": no centers");
  const std::size_t m = centers.size();
  const std::size_t k = cfg_.k;

  BlockOutput out;
  const auto default_groups = kernels::group_parallel(cloud, centers, {}, cfg_.radius, k);

  Var params;
  std::vector<GroupIndex> groups;
  if (cfg_.deform) {
    const auto members = flat_members(default_groups);
    Var rel = tape.constant(offsets_tensor(cloud, default_groups, k, cfg_.radius));
    Var group_in = ag::concat({ag::gather_rows(feats, members), ag::scale(rel, -1.0)}, 1);
    Var raw = regressor_.forward(tape, ag::reshape(group_in, {m, k, cfg_.in_dim + 3}));
    params = ag::deform_params(raw);
    std::vector<kernels::Mat3> transforms(m);
    out.deform.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      out.deform[j] = DeformParams::from_row(params.value().data().subspan(j * 6, 6));
      transforms[j] = build_transform(out.deform[j]).m;
    }
    groups = kernels::group_parallel(cloud, centers, transforms, cfg_.radius, k);
  } else {
    groups = default_groups;
    out.deform.assign(m, DeformParams{});
  }

  Var offsets = tape.constant(offsets_tensor(cloud, groups, k, cfg_.radius));
  Var pos_in = cfg_.deform ? ag::transform_offsets(params, offsets, k) : offsets;
  Var pos = pos_.forward(tape, pos_in);

  const auto members = flat_members(groups);
  Var query = ag::gather_rows(feats, centers);
  Var member_feats = ag::gather_rows(feats, members);
  Var attended = attention_.forward(tape, query, member_feats, member_feats, pos, k);
  Var hidden = ag::add(attended, residual_.forward(tape, query));
  out.features = out_mlp_.forward(tape, hidden);
  out.groups = std::move(groups);
  return out;
}

Encoder::Encoder(ParameterStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    blocks_.emplace_back(store, name + ".stage" + std::to_string(s), cfg_.stages[s].block, rng);
  }
}

EncoderOutput Encoder::forward(Tape& tape, const PointCloud& cloud, Var feats) const {
  EncoderOutput out;
  out.stages.reserve(blocks_.size());
  const PointCloud* points = &cloud;
  Var cur = feats;
  for (std::size_t s = 0; s < blocks_.size(); ++s) {
    const std::size_t m = cfg_.stages[s].samples;
    if (points->size() < m) {
      throw std::invalid_argument("encoder stage " + std::to_string(s) + ": insufficient points (" +
                                  std::to_string(points->size()) + " < " + std::to_string(m) + ")");
    }
    StageOutput st;
    st.indices = kernels::fps_parallel(*points, m);
    BlockOutput b = blocks_[s].forward(tape, *points, cur, st.indices);
    st.points.reserve(m);
    for (std::size_t i : st.indices) st.points.push_back((*points)[i]);
    st.features = b.features;
    st.groups = std::move(b.groups);
    out.stages.push_back(std::move(st));
    points = &out.stages.back().points;
    cur = out.stages.back().features;
  }
  return out;
}

}  // namespace cutrack
