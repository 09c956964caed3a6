#include "cutrack/eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace cutrack {

FrameResult frame_result(const BBox3D& pred, const BBox3D& gt) {
  return {rotated_iou_3d(pred, gt), center_distance(pred, gt)};
}

double success_metric(std::span<const FrameResult> results) {
  if (results.empty()) throw std::invalid_argument("success_metric: no frames");
  double s = 0.0;
  for (const FrameResult& r : results) s += r.iou;
  return 100.0 * s / static_cast<double>(results.size());
}

double precision_metric(std::span<const FrameResult> results, double range_m) {
  if (results.empty()) throw std::invalid_argument("precision_metric: no frames");
  if (!(range_m > 0.0)) throw std::invalid_argument("precision_metric: range must be positive");
  double s = 0.0;
  for (const FrameResult& r : results) s += std::max(0.0, 1.0 - r.center_dist / range_m);
  return 100.0 * s / static_cast<double>(results.size());
}

CategoryResult category_result(const std::string& category, std::span<const FrameResult> results) {
  return {category, results.size(), success_metric(results), precision_metric(results)};
}

CategoryResult aggregate_weighted_mean(std::span<const CategoryResult> rows, const std::string& name) {
  if (rows.empty()) throw std::invalid_argument("aggregate_weighted_mean: no rows");
  CategoryResult out{name, 0, 0.0, 0.0};
  for (const CategoryResult& r : rows) {
    out.frames += r.frames;
    out.success += r.success * static_cast<double>(r.frames);
    out.precision += r.precision * static_cast<double>(r.frames);
  }
  if (out.frames == 0) throw std::invalid_argument("aggregate_weighted_mean: zero total frames");
  out.success /= static_cast<double>(out.frames);
  out.precision /= static_cast<double>(out.frames);
  return out;
}

}  // namespace cutrack
