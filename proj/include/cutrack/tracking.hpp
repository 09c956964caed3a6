#pragma once

// One-pass tracking. A sequence is handed to the loop as its first annotated
// box plus unlabelled clouds, so later ground truth is unreachable.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutrack/datasets.hpp"
#include "cutrack/trackers.hpp"

namespace cutrack {

struct TrackingInput {
  std::string sequence_id;
  std::string category;
  std::vector<std::int64_t> frame_ids;
  BBox3D first_box;
  PointCloud first_cloud;
  std::vector<PointCloud> clouds;  ///< frames 1 .. T-1

  /// Copies frame 0's target box and every cloud; no other labels.
  static TrackingInput from_sequence(const Sequence& seq);
};

struct TrackContext {
  std::size_t frame;
  const BBox3D& first_box;
  const PointCloud& first_cloud;
  const BBox3D& prev_box;
  const PointCloud& prev_cloud;
  const PointCloud& cur_cloud;
};

struct FrameDiagnostics {
  bool empty_region = false;  ///< nothing to search; previous box carried forward
  bool fallback = false;      ///< the head used its unmasked fallback
  std::size_t cropped = 0;    ///< scene points inside the search region
};

struct Prediction {
  BBox3D box;
  FrameDiagnostics diag;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const TrackContext& ctx) = 0;
};

struct TrackResult {
  std::string sequence_id;
  std::string category;
  std::vector<std::int64_t> frame_ids;
  std::vector<BBox3D> boxes;  ///< boxes[0] is the given first box
  std::vector<FrameDiagnostics> diagnostics;
};

TrackResult track_sequence(Predictor& predictor, const TrackingInput& input);

struct SiameseInputs {
  PointCloud template_points;  ///< template-canonical, n_t points
  Extents template_extents;
  RegionSpec region;
  RegionSample search;
};

/// Template from the first box, search region around reference.
SiameseInputs prepare_siamese(const ModelConfig& cfg, const BBox3D& first_box, const PointCloud& first_cloud,
                              const BBox3D& reference, const PointCloud& cur_cloud, std::uint64_t seed);

struct MotionInputs {
  RegionSpec region;
  RegionSample prev;
  RegionSample cur;
  std::vector<int> prev_mask;
};

MotionInputs prepare_motion(const ModelConfig& cfg, const BBox3D& reference, const PointCloud& prev_cloud,
                            const PointCloud& cur_cloud, std::uint64_t seed);

/// World box from a Siamese forward pass.
BBox3D siamese_box(const SiameseOutput& out, const RegionSpec& region, const Extents& template_extents);
/// World box from a motion forward pass.
BBox3D motion_box(const MotionOutput& out, const BBox3D& reference, const Extents& template_extents);

/// Runs a trained model through the paradigm's forward pass.
class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const TrackerModel& model) : model_(&model) {}
  Prediction predict(const TrackContext& ctx) override;

 private:
  const TrackerModel* model_;
};

TrackResult track_sequence(const TrackerModel& model, const TrackingInput& input);

nlohmann::json results_to_json(const std::vector<TrackResult>& results);
std::vector<TrackResult> results_from_json(const nlohmann::json& j);

struct LatencyRow {
  std::size_t points = 0;
  double preprocess_mean_ms = 0, preprocess_std_ms = 0;
  double forward_mean_ms = 0, forward_std_ms = 0;
  double postprocess_mean_ms = 0, postprocess_std_ms = 0;
};

/// Times preprocessing, forward and postprocessing on a synthetic frame pair
/// with the network fed `points` search points per frame.
std::vector<LatencyRow> latency_bench(const TrackerModel& model, const std::vector<std::size_t>& sizes,
                                      std::size_t runs = 100, std::size_t warmup = 5);
std::string latency_csv(const std::vector<LatencyRow>& rows);

}  // namespace cutrack
