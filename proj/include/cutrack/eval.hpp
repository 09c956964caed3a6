#pragma once

// One-pass evaluation: Success is the area under the IoU-threshold curve
// (the mean IoU), Precision the area under the center-distance curve on
// [0, 2 m] normalized by the range.

#include <span>
#include <string>
#include <vector>

#include "cutrack/geometry.hpp"

namespace cutrack {

inline constexpr double kPrecisionRangeM = 2.0;

struct FrameResult {
  double iou = 0.0;
  double center_dist = 0.0;  ///< meters
};

struct CategoryResult {
  std::string category;
  std::size_t frames = 0;
  double success = 0.0;    ///< percent
  double precision = 0.0;  ///< percent
};

FrameResult frame_result(const BBox3D& pred, const BBox3D& gt);

/// 100 * mean IoU.
double success_metric(std::span<const FrameResult> results);

/// 100 * mean(max(0, 1 - d / range)), the normalized AUC of the
/// fraction-below-threshold curve over [0, range].
double precision_metric(std::span<const FrameResult> results, double range_m = kPrecisionRangeM);

CategoryResult category_result(const std::string& category, std::span<const FrameResult> results);

/// Frame-count-weighted mean of success and precision; frames are summed.
CategoryResult aggregate_weighted_mean(std::span<const CategoryResult> rows, const std::string& name = "mean");

}  // namespace cutrack
