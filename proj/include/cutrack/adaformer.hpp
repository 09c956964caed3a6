#pragma once

// Hierarchical point-set encoder built from deformable-group vector-attention
// blocks. Each block regresses a per-group scale/rotation from its default
// ball group, re-gathers members under that transform, and mixes member
// features with per-channel attention.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cutrack/geometry.hpp"
#include "cutrack/kernels.hpp"
#include "cutrack/nn.hpp"
#include "cutrack/tensor.hpp"

namespace cutrack {

/// Scales are unitless; angles in radians.
struct DeformParams {
  double sx = 1.0, sy = 1.0, sz = 1.0;
  double theta_x = 0.0, theta_y = 0.0, theta_z = 0.0;

  static DeformParams from_row(std::span<const double> row);
};

struct DeformTransform {
  kernels::Mat3 m = kernels::kIdentity3;

  double det() const;
  Vec3 apply(const Vec3& v) const { return kernels::transform_point(m, v); }
};

/// Largest per-axis receptive-field change a block may regress.
inline constexpr double kMaxDeformScale = 3.0;

/// Maps six unconstrained outputs to DeformParams: exp(clamp(., +-ln 3)) for
/// the scales, pi * tanh(.) for the angles.
DeformParams params_from_raw(std::span<const double> raw);

/// T = T_s * T_rx * T_ry * T_rz.
DeformTransform build_transform(const DeformParams& p);

/// Members are the k points with smallest |T (c_i - c_center) / r| among those
/// inside the unit sphere; padding as in ball_query_topk.
GroupIndex deform_group(const PointCloud& cloud, std::size_t center_index, const DeformTransform& t, double r,
                        std::size_t k);

namespace ag {
/// Row-wise raw -> [sx, sy, sz, theta_x, theta_y, theta_z] on an [m x 6] tensor.
Var deform_params(Var raw);
/// out[r] = T(params[r / k]) * offsets[r] for offsets of shape [m*k x 3].
Var transform_offsets(Var params, Var offsets, std::size_t k);
}  // namespace ag

struct BlockConfig {
  std::size_t in_dim = 3;
  std::size_t out_dim = 32;
  std::size_t k = 16;
  double radius = 0.3;
  std::size_t pos_hidden = 16;
  /// false gives the fixed-ball ablation: groups are never deformed.
  bool deform = true;
};

struct StageConfig {
  std::size_t samples = 128;
  BlockConfig block;
};

struct EncoderConfig {
  std::size_t in_dim = 3;
  std::vector<StageConfig> stages;

  /// Three stages, samples [128, 64, 32], radii [0.3, 0.6, 1.2] m, k = 16, dims [32, 64, 128].
  static EncoderConfig toy_default(std::size_t in_dim);
  void validate() const;
  std::size_t out_dim() const { return stages.back().block.out_dim; }
};

/// Shared two-layer MLP from pooled [f_i; c_i] to six raw transform outputs.
class GroupRegressor {
 public:
  GroupRegressor() = default;
  GroupRegressor(ParameterStore& store, const std::string& name, std::size_t feat_dim, Rng& rng);
  /// group_feats: [m x k x (dim+3)] -> raw [m x 6]
  Var forward(Tape& tape, Var group_feats) const;
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
};

/// Regresses the deformation of one group from its [k x (dim+3)] member rows.
DeformParams regress_deform(Tape& tape, const GroupRegressor& reg, Var group_feats);

/// Two-layer MLP on relative offsets.
class PositionEmbedding {
 public:
  PositionEmbedding() = default;
  PositionEmbedding(ParameterStore& store, const std::string& name, std::size_t hidden, std::size_t out_dim,
                    Rng& rng);
  Var forward(Tape& tape, Var offsets) const;  ///< [n x 3] -> [n x dim]

 private:
  Mlp mlp_;
};

/// Embeds center - member for each member.
Var position_embed(Tape& tape, const PositionEmbedding& pe, const Vec3& center, std::span<const Vec3> members);

/// Per-channel attention of one query over a group of members.
class VectorAttention {
 public:
  VectorAttention() = default;
  VectorAttention(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t dim, Rng& rng);

  /// queries [m x in], keys/values [m*k x in], pos [m*k x dim] -> [m x dim]
  Var forward(Tape& tape, Var queries, Var keys, Var values, Var pos, std::size_t k) const;
  /// Per-channel softmax weights [m x k x dim].
  Var weights(Tape& tape, Var queries, Var keys, Var pos, std::size_t k) const;

 private:
  Linear wq_, wk_, wv_, phi_;
};

/// Single-group form: q [dim] or [1 x dim], keys/values/pos [k x dim].
Var group_vector_attention(Tape& tape, const VectorAttention& va, Var q, Var keys, Var values, Var pos);

struct BlockOutput {
  Var features;                        ///< [m x out_dim]
  std::vector<GroupIndex> groups;      ///< deformable groups, one per center
  std::vector<DeformParams> deform;    ///< regressed per-center parameters
};

class AdaFormerBlock {
 public:
  AdaFormerBlock() = default;
  AdaFormerBlock(ParameterStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng);

  BlockOutput forward(Tape& tape, const PointCloud& cloud, Var feats, std::span<const std::size_t> centers) const;
  const BlockConfig& config() const { return cfg_; }

 private:
  BlockConfig cfg_;
  std::string name_;
  GroupRegressor regressor_;
  PositionEmbedding pos_;
  VectorAttention attention_;
  Linear residual_;
  Mlp out_mlp_;
};

struct StageOutput {
  PointCloud points;                 ///< sampled centers of this stage
  std::vector<std::size_t> indices;  ///< center indices into the previous stage's points
  Var features;                      ///< [samples x out_dim]
  std::vector<GroupIndex> groups;
};

struct EncoderOutput {
  std::vector<StageOutput> stages;
  const StageOutput& last() const { return stages.back(); }
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);

  /// feats: [N x in_dim] rows aligned with cloud.
  EncoderOutput forward(Tape& tape, const PointCloud& cloud, Var feats) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<AdaFormerBlock> blocks_;
};

}  // namespace cutrack
