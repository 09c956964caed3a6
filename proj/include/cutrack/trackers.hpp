#pragma once

// Two tracking heads on a shared AdaFormer encoder. The Siamese head scores
// and offsets every search seed towards the target center; the motion head
// segments the concatenated previous/current clouds and regresses the
// target's relative motion.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutrack/adaformer.hpp"
#include "cutrack/geometry.hpp"
#include "cutrack/nn.hpp"
#include "cutrack/tensor.hpp"
#include "cutrack/unify.hpp"

namespace cutrack {

enum class Paradigm { kSiamese, kMotion };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

/// Off-switches for the three unified components.
struct Ablation {
  bool adaformer = true;          ///< false: fixed-ball groups
  bool unified_inputs = true;     ///< false: fixed-margin search regions
  bool unified_objective = true;  ///< false: metric offsets, distance labels

  static Ablation all_off() { return {false, false, false}; }
};

inline constexpr double kFixedMarginM = 2.0;
inline constexpr double kFixedLabelRadiusM = 0.6;
/// Bound of the regressed yaw change.
inline constexpr double kMaxDeltaYaw = 0.7853981633974483;

struct ModelConfig {
  Paradigm paradigm = Paradigm::kMotion;
  EncoderConfig encoder;               ///< in_dim is set from the paradigm
  std::vector<std::size_t> head_hidden{64, 64};
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  std::size_t n_t = 128;
  std::size_t n_s = 256;               ///< per frame for the motion head
  double seg_threshold = 0.5;
  Ablation ablation;

  /// Small three-stage encoder sized for single-core training runs.
  static ModelConfig desk_default(Paradigm p);
  static std::size_t input_channels(Paradigm p) { return p == Paradigm::kSiamese ? 3 : 5; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Search region around a reference box under the configured input switch.
RegionSpec region_for(const ModelConfig& cfg, const BBox3D& reference);

/// Offsets and the matching labels under the configured objective switch.
Vec3 encode_offset(const ModelConfig& cfg, const Vec3& delta, const Extents& extents);
Vec3 decode_offset(const ModelConfig& cfg, const Vec3& encoded, const Extents& extents);
std::vector<int> target_labels(const ModelConfig& cfg, const PointCloud& target_canonical, const Extents& extents);

class TrackerModel {
 public:
  TrackerModel(const ModelConfig& cfg, std::uint64_t seed);
  TrackerModel(TrackerModel&&) = default;
  TrackerModel& operator=(TrackerModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Encoder& encoder() const { return encoder_; }
  const Mlp& seed_head() const { return seed_head_; }      ///< Siamese
  const Mlp& seg_head() const { return seg_head_; }        ///< motion
  const Mlp& motion_head() const { return motion_head_; }  ///< motion

  void save(const std::filesystem::path& manifest) const;
  static TrackerModel load(const std::filesystem::path& manifest);

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  Encoder encoder_;
  Mlp seed_head_;
  Mlp seg_head_;
  Mlp motion_head_;
};

/// Region-canonical proposal.
struct Proposal {
  Vec3 center;
  double theta = 0.0;
  double score = 0.5;
};

struct SiameseOutput {
  Var offsets;  ///< [m x 3] encoded offsets
  Var theta;    ///< [m x 1] bounded yaw offsets
  Var logits;   ///< [m x 1]
  PointCloud seeds;
  std::vector<Proposal> proposals;
};

/// template_points are template-canonical, search_points region-canonical,
/// both already resampled to n_t / n_s.
SiameseOutput siamese_forward(Tape& tape, const TrackerModel& model, const PointCloud& template_points,
                              const Extents& template_extents, const PointCloud& search_points);

/// Highest score, ties to the lowest index.
std::size_t select_best_proposal(std::span<const Proposal> proposals);

struct MotionOutput {
  Var seg_logits;  ///< [m x 1] over final-stage seeds
  Var motion;      ///< [1 x 3] encoded center motion
  Var theta;       ///< [1 x 1] bounded yaw change
  PointCloud seeds;
  std::vector<int> seed_is_cur;
  bool fallback = false;  ///< a frame had no predicted foreground seed
  Vec3 delta;             ///< decoded motion, meters in the previous box frame
  double dtheta = 0.0;
};

/// Both clouds are canonical to the previous box; prev_mask flags previous
/// points inside it.
MotionOutput motion_forward(Tape& tape, const TrackerModel& model, const PointCloud& prev_points,
                            std::span<const int> prev_mask, const PointCloud& cur_points,
                            const Extents& template_extents);

struct LossWeights {
  double cls = 1.0;
  double off = 1.0;
  double ang = 1.0;
};

struct LossTargets {
  std::vector<int> labels;              ///< one per score/segmentation logit
  std::vector<std::size_t> rows;        ///< rows of the offset/angle outputs that are supervised
  Tensor offsets;                       ///< same shape as the offset output
  Tensor theta;                         ///< same shape as the angle output
};

struct LossTerms {
  Var total;
  double cls = 0.0;
  double off = 0.0;
  double ang = 0.0;
  bool no_positive = false;  ///< rows was empty; offset and angle terms are 0
};

LossTerms loss_total(Var logits, Var offsets, Var theta, const LossTargets& targets, const LossWeights& w);

/// Targets for Siamese seeds given the region and the ground-truth box.
LossTargets siamese_targets(const ModelConfig& cfg, const PointCloud& seeds, const BBox3D& region_box,
                            const BBox3D& gt, const Extents& template_extents);

/// Targets for motion seeds; prev_gt labels previous-frame seeds, cur_gt the rest.
LossTargets motion_targets(const ModelConfig& cfg, const PointCloud& seeds, std::span<const int> seed_is_cur,
                           const BBox3D& reference, const BBox3D& prev_gt, const BBox3D& cur_gt,
                           const Extents& template_extents);

}  // namespace cutrack
