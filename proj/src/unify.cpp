#include "cutrack/unify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cutrack/nn.hpp"

namespace cutrack {

RegionSpec make_search_region(const BBox3D& prev_box, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("make_search_region: alpha must be positive");
  const Extents& e = prev_box.extents();
  return {prev_box.with_extents({e.w + alpha * e.w, e.h + alpha * e.h, e.l + alpha * e.l}), alpha};
}

RegionSpec make_fixed_margin_region(const BBox3D& prev_box, double margin_m) {
  if (!(margin_m > 0.0)) throw std::invalid_argument("make_fixed_margin_region: margin must be positive");
  const Extents& e = prev_box.extents();
  return {prev_box.with_extents({e.w + 2.0 * margin_m, e.h + 2.0 * margin_m, e.l + 2.0 * margin_m}), 0.0};
}

RegionSample sample_region_points(const PointCloud& scene, const RegionSpec& region, std::size_t n_s,
                                  std::uint64_t seed) {
  if (n_s < 1) throw std::invalid_argument("sample_region_points: n_s must be at least 1");
  RegionSample out;
  PointCloud crop = to_canonical(crop_points_in_box(scene, region.box), region.box);
  out.cropped = crop.size();
  if (crop.empty()) {
    out.empty = true;
    out.points.assign(n_s, Vec3{});
    return out;
  }
  Rng rng(seed);
  if (crop.size() == n_s) {
    out.points = std::move(crop);
  } else if (crop.size() > n_s) {
    // Partial Fisher-Yates; kept points stay in scene order.
    std::vector<std::size_t> idx(crop.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_s; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    idx.resize(n_s);
    std::sort(idx.begin(), idx.end());
    out.points.reserve(n_s);
    for (std::size_t i : idx) out.points.push_back(crop[i]);
  } else {
    out.points = crop;
    while (out.points.size() < n_s) out.points.push_back(crop[rng.index(crop.size())]);
  }
  return out;
}

Vec3 normalize_offset(const Vec3& delta, const Extents& e) {
  if (!(e.w > 0.0) || !(e.h > 0.0) || !(e.l > 0.0)) throw std::invalid_argument("normalize_offset: extents must be positive");
  return {delta.x / e.l, delta.y / e.w, delta.z / e.h};
}

Vec3 denormalize_offset(const Vec3& n, const Extents& e) { return {n.x * e.l, n.y * e.w, n.z * e.h}; }

std::vector<int> shape_aware_labels(const PointCloud& points, const Extents& e, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("shape_aware_labels: beta must be positive");
  const double hx = 0.5 * beta * e.l;
  const double hy = 0.5 * beta * e.w;
  const double hz = 0.5 * beta * e.h;
  std::vector<int> labels(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    labels[i] = (std::abs(p.x) <= hx && std::abs(p.y) <= hy && std::abs(p.z) <= hz) ? 1 : 0;
  }
  return labels;
}

std::vector<int> distance_labels(const PointCloud& points, double radius) {
  std::vector<int> labels(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) labels[i] = points[i].norm() <= radius ? 1 : 0;
  return labels;
}

}  // namespace cutrack
