#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cutrack/adaformer.hpp"
#include "cutrack/gradcheck.hpp"
#include "cutrack/kernels.hpp"
#include "oracles.hpp"

using namespace cutrack;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double half = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  PointCloud c(n);
  for (Vec3& p : c) p = {u(rng), u(rng), u(rng)};
  return c;
}

DeformParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(1.0 / 3.0, 3.0), a(-3.0, 3.0);
  return {s(rng), s(rng), s(rng), a(rng), a(rng), a(rng)};
}

Tensor rand_t(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(DeformTransform, RotationAboutZ) {
  const auto t = build_transform({1, 1, 1, 0, 0, std::numbers::pi / 2});
  const Vec3 v = t.apply({1, 0, 0});
  EXPECT_NEAR(v.x, 0.0, 1e-12);
  EXPECT_NEAR(v.y, 1.0, 1e-12);
  EXPECT_NEAR(v.z, 0.0, 1e-12);
}

TEST(DeformTransform, ScaleThenRotateOrder) {
  const auto t = build_transform({2, 1, 1, 0, 0, 0});
  EXPECT_EQ(t.apply({1, 0, 0}), (Vec3{2, 0, 0}));
  // T_s applied after T_rz: rotating (1,0,0) to (0,1,0) then scaling x leaves it.
  const auto r = build_transform({2, 1, 1, 0, 0, std::numbers::pi / 2});
  const Vec3 v = r.apply({1, 0, 0});
  EXPECT_NEAR(v.x, 0.0, 1e-12);
  EXPECT_NEAR(v.y, 1.0, 1e-12);
}

TEST(DeformTransform, DeterminantIsScaleProduct) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const DeformParams p = random_params(rng);
    const double det = build_transform(p).det();
    EXPECT_GT(det, 0.0);
    EXPECT_NEAR(det, p.sx * p.sy * p.sz, 1e-12);
  }
}

TEST(DeformParamsFromRaw, ZeroIsIdentityAndScalesBounded) {
  const double zero[6] = {};
  const DeformParams p = params_from_raw(zero);
  EXPECT_EQ(p.sx, 1.0);
  EXPECT_EQ(p.theta_z, 0.0);
  const double big[6] = {50, -50, 2, 40, -40, 0.3};
  const DeformParams q = params_from_raw(big);
  EXPECT_NEAR(q.sx, kMaxDeformScale, 1e-12);
  EXPECT_NEAR(q.sy, 1.0 / kMaxDeformScale, 1e-12);
  EXPECT_LE(q.theta_x, std::numbers::pi);
  EXPECT_GE(q.theta_y, -std::numbers::pi);
  const double mid[6] = {0, 0, 0, 5, -5, 0};
  const DeformParams m = params_from_raw(mid);
  EXPECT_LT(m.theta_x, std::numbers::pi);
  EXPECT_GT(m.theta_y, -std::numbers::pi);
  EXPECT_NEAR(m.theta_x, std::numbers::pi * std::tanh(5.0), 1e-12);
}

TEST(RegressDeform, ZeroMlpGivesIdentity) {
  Rng rng(2);
  ParameterStore store;
  GroupRegressor reg(store, "r", 4, rng);
  store.set_zero("r");
  Tape t;
  const DeformParams p = regress_deform(t, reg, t.constant(rand_t({5, 7}, rng)));
  EXPECT_EQ(p.sx, 1.0);
  EXPECT_EQ(p.sy, 1.0);
  EXPECT_EQ(p.sz, 1.0);
  EXPECT_EQ(p.theta_x, 0.0);
  EXPECT_EQ(p.theta_y, 0.0);
  EXPECT_EQ(p.theta_z, 0.0);
}

TEST(RegressDeform, MemberOrderDoesNotMatter) {
  Rng rng(3);
  ParameterStore store;
  GroupRegressor reg(store, "r", 2, rng);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double& v : store[i].value.data()) v = rng.uniform(-1, 1);
  const Tensor g = rand_t({4, 5}, rng);
  Tensor flipped({4, 5});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) flipped.at(r, c) = g.at(3 - r, c);
  Tape t;
  const DeformParams a = regress_deform(t, reg, t.constant(g));
  const DeformParams b = regress_deform(t, reg, t.constant(flipped));
  EXPECT_NEAR(a.sx, b.sx, 1e-14);
  EXPECT_NEAR(a.theta_z, b.theta_z, 1e-14);
}

TEST(RegressDeform, GradcheckThroughParameterMap) {
  Rng rng(4);
  ParameterStore store;
  GroupRegressor reg(store, "r", 3, rng);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double& v : store[i].value.data()) v = rng.uniform(-0.5, 0.5);
  const Tensor g = rand_t({1, 4, 6}, rng);
  const Tensor w = rand_t({1, 6}, rng);
  const auto r = gradcheck_params(
      [&](Tape& t) {
        return ag::sum_all(ag::hadamard(ag::deform_params(reg.forward(t, t.constant(g))), t.constant(w)));
      },
      store);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(DeformGroup, IdentityMatchesBallQuery) {
  const DeformTransform id = build_transform({});
  for (std::uint64_t s = 0; s < 200; ++s) {
    const PointCloud c = random_cloud(60, s);
    const std::size_t center = s % c.size();
    const std::size_t k = 1 + s % 12;
    EXPECT_EQ(deform_group(c, center, id, 0.5, k).member_indices,
              ball_query_topk(c, c[center], 0.5, k).member_indices);
  }
}

TEST(DeformGroup, StretchExcludesPointAlongX) {
  const PointCloud c{{0, 0, 0}, {0.9, 0, 0}, {0, 0.9, 0}};
  const auto t = build_transform({3, 1, 1, 0, 0, 0});
  const auto g = deform_group(c, 0, t, 1.0, 3);
  EXPECT_EQ(sorted(g.member_indices), (std::vector<std::size_t>{0, 0, 2}));
  EXPECT_EQ(sorted(deform_group(c, 0, build_transform({}), 1.0, 3).member_indices),
            (std::vector<std::size_t>{0, 1, 2}));
}

TEST(DeformGroup, MatchesBruteForceProjectedSort) {
  std::mt19937_64 rng(5);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PointCloud c = random_cloud(80, 100 + s);
    const auto t = build_transform(random_params(rng));
    double m[9];
    std::copy(t.m.begin(), t.m.end(), m);
    const std::size_t center = s % c.size();
    EXPECT_EQ(deform_group(c, center, t, 0.6, 8).member_indices, oracle::transformed_query(c, center, m, 0.6, 8));
  }
}

TEST(DeformGroup, EmptyCloudThrows) { EXPECT_THROW(deform_group({}, 0, {}, 1.0, 1), std::invalid_argument); }

TEST(Kernels, ParallelGroupingMatchesSerial) {
  std::mt19937_64 rng(6);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PointCloud c = random_cloud(500, 200 + s, 2.0);
    std::vector<std::size_t> centers(100);
    std::iota(centers.begin(), centers.end(), std::size_t{0});
    std::vector<kernels::Mat3> transforms;
    for (std::size_t i = 0; i < centers.size(); ++i) transforms.push_back(build_transform(random_params(rng)).m);
    const auto a = kernels::group_serial(c, centers, transforms, 0.5, 16);
    const auto b = kernels::group_parallel(c, centers, transforms, 0.5, 16);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].member_indices, b[i].member_indices);
      EXPECT_EQ(a[i].fallback, b[i].fallback);
    }
    const auto ia = kernels::group_serial(c, centers, {}, 0.5, 16);
    const auto ib = kernels::group_parallel(c, centers, {}, 0.5, 16);
    for (std::size_t i = 0; i < ia.size(); ++i) EXPECT_EQ(ia[i].member_indices, ib[i].member_indices);
  }
}

TEST(Kernels, ParallelFpsMatchesSerial) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PointCloud c = random_cloud(1000 + 37 * s, 300 + s);
    EXPECT_EQ(kernels::fps_serial(c, 128), kernels::fps_parallel(c, 128));
    EXPECT_EQ(kernels::fps_serial(c, 128), farthest_point_sample(c, 128));
  }
}

TEST(PositionEmbed, ZeroInitCenterMember) {
  Rng rng(7);
  ParameterStore store;
  PositionEmbedding pe(store, "p", 8, 4, rng);
  store.set_zero("p");
  Tape t;
  const std::vector<Vec3> members{{1, 2, 3}};
  const Var y = position_embed(t, pe, {1, 2, 3}, members);
  ASSERT_EQ(y.shape(), (Shape{1, 4}));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(PositionEmbed, GradcheckThroughMlp) {
  Rng rng(8);
  ParameterStore store;
  PositionEmbedding pe(store, "p", 6, 4, rng);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double& v : store[i].value.data()) v += rng.uniform(-0.05, 0.05);
  const Tensor off = rand_t({5, 3}, rng);
  const Tensor w = rand_t({5, 4}, rng);
  const auto r = gradcheck_params(
      [&](Tape& t) { return ag::sum_all(ag::hadamard(pe.forward(t, t.constant(off)), t.constant(w))); }, store);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

class VectorAttentionTest : public ::testing::Test {
 protected:
  Rng rng{9};
  ParameterStore store;
  VectorAttention va{store, "va", 4, 4, rng};
};

TEST_F(VectorAttentionTest, SingleMemberPassesValueThrough) {
  Tape t;
  const Tensor q = rand_t({4}, rng), k = rand_t({1, 4}, rng), v = rand_t({1, 4}, rng), p = rand_t({1, 4}, rng);
  const Var out = group_vector_attention(t, va, t.constant(q), t.constant(k), t.constant(v), t.constant(p));
  // omega_v(v) + p
  ParameterStore& s = store;
  const Tensor& W = s.get("va.v.weight").value;
  const Tensor& b = s.get("va.v.bias").value;
  for (std::size_t c = 0; c < 4; ++c) {
    double e = b[c] + p[c];
    for (std::size_t i = 0; i < 4; ++i) e += v[i] * W.at(i, c);
    EXPECT_NEAR(out.value()[c], e, 1e-12);
  }
}

TEST_F(VectorAttentionTest, DuplicatedMemberLeavesOutput) {
  Tape t;
  const Tensor q = rand_t({4}, rng), k = rand_t({1, 4}, rng), v = rand_t({1, 4}, rng), p = rand_t({1, 4}, rng);
  auto twice = [](const Tensor& x) { return Tensor({2, 4}, [&] {
                                        std::vector<double> d(x.data().begin(), x.data().end());
                                        d.insert(d.end(), x.data().begin(), x.data().end());
                                        return d;
                                      }()); };
  const Var one = group_vector_attention(t, va, t.constant(q), t.constant(k), t.constant(v), t.constant(p));
  const Var two = group_vector_attention(t, va, t.constant(q), t.constant(twice(k)), t.constant(twice(v)),
                                         t.constant(twice(p)));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(one.value()[c], two.value()[c], 1e-12);
}

TEST_F(VectorAttentionTest, PermutationInvariantAndWeightsNormalized) {
  Tape t;
  const std::size_t k = 6;
  const Tensor q = rand_t({1, 4}, rng), K = rand_t({k, 4}, rng), V = rand_t({k, 4}, rng), P = rand_t({k, 4}, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  auto permute = [&](const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < 4; ++c) y.at(r, c) = x.at(perm[r], c);
    return y;
  };
  const Var a = va.forward(t, t.constant(q), t.constant(K), t.constant(V), t.constant(P), k);
  const Var b = va.forward(t, t.constant(q), t.constant(permute(K)), t.constant(permute(V)), t.constant(permute(P)), k);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a.value()[c], b.value()[c], 1e-12);
  const Var w = va.weights(t, t.constant(q), t.constant(K), t.constant(P), k);
  const Var s = ag::sum(w, 1);
  for (double v : s.value().data()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST_F(VectorAttentionTest, EmptyGroupThrows) {
  Tape t;
  EXPECT_THROW(va.forward(t, t.constant(Tensor({1, 4})), t.constant(Tensor({1, 4})), t.constant(Tensor({1, 4})),
                          t.constant(Tensor({1, 4})), 0),
               std::invalid_argument);
}

TEST(AdaFormerBlock, ZeroNetworkGivesZeros) {
  Rng rng(10);
  ParameterStore store;
  BlockConfig bc;
  bc.in_dim = 3;
  bc.out_dim = 5;
  bc.k = 1;
  AdaFormerBlock block(store, "b", bc, rng);
  store.set_zero("");
  const PointCloud c = random_cloud(10, 11);
  Tape t;
  const std::vector<std::size_t> centers{4};
  const BlockOutput o = block.forward(t, c, t.constant(rand_t({10, 3}, rng)), centers);
  ASSERT_EQ(o.features.shape(), (Shape{1, 5}));
  for (double v : o.features.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(AdaFormerBlock, ZeroRegressorEqualsFixedBall) {
  BlockConfig on;
  on.in_dim = 4;
  on.out_dim = 6;
  on.k = 5;
  on.radius = 0.5;
  BlockConfig off = on;
  off.deform = false;
  Rng ra(12), rb(12);
  ParameterStore sa, sb;
  AdaFormerBlock a(sa, "b", on, ra), b(sb, "b", off, rb);
  sa.set_zero("b.regress");
  const PointCloud c = random_cloud(40, 13);
  Rng rf(14);
  const Tensor f = rand_t({40, 4}, rf);
  std::vector<std::size_t> centers(10);
  std::iota(centers.begin(), centers.end(), std::size_t{0});
  Tape t;
  const BlockOutput oa = a.forward(t, c, t.constant(f), centers);
  const BlockOutput ob = b.forward(t, c, t.constant(f), centers);
  for (std::size_t i = 0; i < centers.size(); ++i) EXPECT_EQ(oa.groups[i].member_indices, ob.groups[i].member_indices);
  for (std::size_t i = 0; i < oa.features.value().size(); ++i)
    EXPECT_NEAR(oa.features.value()[i], ob.features.value()[i], 1e-12);
}

TEST(Encoder, OneStageWithAllPointsUsesEveryCenter) {
  Rng rng(15);
  ParameterStore store;
  EncoderConfig cfg;
  cfg.in_dim = 3;
  StageConfig st;
  st.samples = 20;
  st.block = {3, 8, 4, 0.5, 4, true};
  cfg.stages = {st};
  Encoder enc(store, "e", cfg, rng);
  const PointCloud c = random_cloud(20, 16);
  Tape t;
  const EncoderOutput o = enc.forward(t, c, t.constant(rand_t({20, 3}, rng)));
  EXPECT_EQ(sorted(o.last().indices), sorted([] {
              std::vector<std::size_t> v(20);
              std::iota(v.begin(), v.end(), std::size_t{0});
              return v;
            }()));
}

TEST(Encoder, ToyDefaultShapes) {
  Rng rng(17);
  ParameterStore store;
  const EncoderConfig cfg = EncoderConfig::toy_default(3);
  Encoder enc(store, "e", cfg, rng);
  const PointCloud c = random_cloud(256, 18, 2.0);
  Tape t;
  const EncoderOutput o = enc.forward(t, c, t.constant(rand_t({256, 3}, rng)));
  ASSERT_EQ(o.stages.size(), 3u);
  EXPECT_EQ(o.stages[0].features.shape(), (Shape{128, 32}));
  EXPECT_EQ(o.stages[1].features.shape(), (Shape{64, 64}));
  EXPECT_EQ(o.stages[2].features.shape(), (Shape{32, 128}));
}

TEST(Encoder, InsufficientPointsNamesStage) {
  Rng rng(19);
  ParameterStore store;
  Encoder enc(store, "e", EncoderConfig::toy_default(3), rng);
  const PointCloud c = random_cloud(100, 20);
  Tape t;
  try {
    enc.forward(t, c, t.constant(Tensor({100, 3})));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("stage 0"), std::string::npos);
  }
}

TEST(Encoder, ScaleCovarianceOfGroups) {
  Rng rng(21);
  ParameterStore sa, sb;
  EncoderConfig cfg;
  cfg.in_dim = 3;
  StageConfig s0, s1;
  s0.samples = 32;
  s0.block = {3, 8, 6, 0.4, 4, false};
  s1.samples = 16;
  s1.block = {8, 8, 6, 0.8, 4, false};
  cfg.stages = {s0, s1};
  EncoderConfig doubled = cfg;
  for (auto& st : doubled.stages) st.block.radius *= 2;
  Rng ra(22), rb(22);
  Encoder a(sa, "e", cfg, ra), b(sb, "e", doubled, rb);
  const PointCloud c = random_cloud(64, 23);
  PointCloud c2;
  for (const Vec3& p : c) c2.push_back(2.0 * p);
  const Tensor f = rand_t({64, 3}, rng);
  Tape t;
  const EncoderOutput oa = a.forward(t, c, t.constant(f));
  const EncoderOutput ob = b.forward(t, c2, t.constant(f));
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(oa.stages[s].indices, ob.stages[s].indices);
    for (std::size_t g = 0; g < oa.stages[s].groups.size(); ++g)
      EXPECT_EQ(oa.stages[s].groups[g].member_indices, ob.stages[s].groups[g].member_indices);
  }
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig cfg = EncoderConfig::toy_default(3);
  cfg.stages[1].samples = 200;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = EncoderConfig::toy_default(3);
  cfg.stages[2].block.in_dim = 7;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Encoder, ReadoutGradcheckOnToyCloud) {
  Rng rng(24);
  ParameterStore store;
  EncoderConfig cfg;
  cfg.in_dim = 3;
  StageConfig s0, s1;
  s0.samples = 16;
  s0.block = {3, 6, 4, 0.6, 4, true};
  s1.samples = 8;
  s1.block = {6, 6, 4, 1.2, 4, true};
  cfg.stages = {s0, s1};
  Encoder enc(store, "e", cfg, rng);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const bool reg = store[i].name.find("regress") != std::string::npos;
    for (double& v : store[i].value.data()) v += rng.uniform(-1, 1) * (reg ? 0.3 : 0.05);
  }
  const PointCloud c = random_cloud(32, 25);
  const Tensor f = rand_t({32, 3}, rng);
  const Tensor w = rand_t({8, 6}, rng);
  const auto softmax_invariant = [](const Parameter& p) {
    return p.name.find(".attn.q.") != std::string::npos || p.name.ends_with(".attn.k.bias") ||
           p.name.ends_with(".attn.phi.bias");
  };
  auto f_loss = [&](Tape& t) {
    return ag::sum_all(ag::hadamard(enc.forward(t, c, t.constant(f)).last().features, t.constant(w)));
  };
  const auto r = gradcheck_params(f_loss, store, 1e-5, 0, 0, [&](const Parameter& p) { return !softmax_invariant(p); });
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_LT(null_gradient_check(f_loss, store, softmax_invariant).max_rel_error, 1e-8);
}
