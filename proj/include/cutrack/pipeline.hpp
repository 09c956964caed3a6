#pragma once

// End-to-end runs: generate, train, track and score, plus the alpha/beta sweep.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutrack/config.hpp"
#include "cutrack/eval.hpp"
#include "cutrack/tracking.hpp"
#include "cutrack/training.hpp"

namespace cutrack {

/// Tracks every sequence, at most `jobs` at a time (0 = OpenMP default).
std::vector<TrackResult> track_all(const TrackerModel& model, const std::vector<Sequence>& data, int jobs = 1);

/// Per-frame scores of each result against the sequence with the same id.
/// Frame ids must match exactly.
std::vector<FrameResult> score_sequence(const TrackResult& result, const Sequence& gt);

/// One row per category (name order) followed by the frame-weighted "mean" row.
std::vector<CategoryResult> evaluate(const std::vector<TrackResult>& results, const std::vector<Sequence>& gt);

/// category,frames,success,precision
std::string metrics_csv(const std::vector<CategoryResult>& rows);
std::vector<CategoryResult> parse_metrics_csv(const std::string& text);

struct ExperimentResult {
  TrackerModel model;
  TrainResult train;
  std::vector<TrackResult> tracks;
  std::vector<CategoryResult> metrics;
};

/// Trains on cfg.synth, tracks and scores cfg.eval_synth.
ExperimentResult run_experiment(const RunConfig& cfg, int jobs = 1,
                                const std::function<void(const StepRecord&)>& on_step = {});

struct SweepPoint {
  double value = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<CategoryResult>> per_seed;
  /// All seeds' frames pooled per category.
  std::vector<CategoryResult> metrics;
};

/// Directory name of one sweep value, e.g. "alpha_1.6".
std::string sweep_dir_name(const std::string& param, double value);

/// For each value: parse base with the parameter replaced and each seed
/// substituted, run the experiment, and write <out>/<param>_<value>/metrics.csv,
/// <out>/<param>_<value>/seed_<s>/metrics.csv and <out>/summary.csv.
/// An empty seed list runs the configuration's own seed.
std::vector<SweepPoint> run_sweep(const nlohmann::json& base, const std::string& param,
                                  const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& out, int jobs = 1,
                                  std::optional<std::uint64_t> seed_override = std::nullopt);

/// param,value,seeds,frames,success,precision
std::string sweep_summary_csv(const std::string& param, const std::vector<SweepPoint>& points);

}  // namespace cutrack
