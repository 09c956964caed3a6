#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutrack/datasets.hpp"
#include "cutrack/nn.hpp"
#include "cutrack/trackers.hpp"

namespace cutrack {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 8;
  std::size_t steps = 500;
  LossWeights weights;
  std::uint64_t seed = 0;
  /// Reference-box perturbation: center stddev as a fraction of each extent, yaw stddev in radians.
  double center_jitter = 0.1;
  double yaw_jitter = 0.05;
  /// Reuse one point-sampling seed for every sample (single-sample overfitting).
  bool fixed_sampling = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// One training pair: predict frame `frame` of a sequence from a perturbed
/// copy of the previous ground-truth box.
struct TrainSample {
  std::size_t sequence = 0;
  std::size_t frame = 1;
  BBox3D reference;
  std::uint64_t seed = 0;
};

TrainSample draw_sample(const std::vector<Sequence>& data, const TrainConfig& cfg, Rng& rng);

/// Forward pass and loss of one sample. skipped is set, and terms left
/// empty, when the search region held no points.
struct SampleLoss {
  LossTerms terms;
  bool skipped = false;
};

SampleLoss sample_loss(Tape& tape, const TrackerModel& model, const Sequence& seq, const TrainSample& s,
                       const LossWeights& w);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0, cls = 0, off = 0, ang = 0;
  std::size_t no_positive = 0;
};

struct TrainResult {
  std::vector<StepRecord> curve;
};

/// Seeded, deterministic Adam loop. Throws TrainingDiverged on a non-finite loss.
TrainResult train(TrackerModel& model, const std::vector<Sequence>& data, const TrainConfig& cfg,
                  const std::function<void(const StepRecord&)>& on_step = {});

std::string loss_curve_csv(const TrainResult& r);

}  // namespace cutrack
