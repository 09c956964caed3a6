#pragma once

// Category-independent search regions and learning targets: regions scaled by
// the target's own extents, offsets normalized by extents, and positive labels
// from an extent-scaled cube. Fixed-distance counterparts are kept for the
// ablation arms.

#include <cstdint>
#include <vector>

#include "cutrack/geometry.hpp"

namespace cutrack {

inline constexpr double kDefaultAlpha = 1.0;
inline constexpr double kDefaultBeta = 0.4;

struct RegionSpec {
  BBox3D box;          ///< same center and yaw as the reference box
  double alpha = 0.0;  ///< 0 for fixed-margin regions
};

RegionSpec make_search_region(const BBox3D& prev_box, double alpha);
RegionSpec make_fixed_margin_region(const BBox3D& prev_box, double margin_m);

struct RegionSample {
  PointCloud points;    ///< region-canonical coordinates, exactly n_s of them
  std::size_t cropped = 0;
  bool empty = false;   ///< crop was empty; points are n_s copies of the origin
};

/// Crop, canonicalize and resample to exactly n_s points with a seeded RNG.
RegionSample sample_region_points(const PointCloud& scene, const RegionSpec& region, std::size_t n_s,
                                  std::uint64_t seed);

/// Offsets normalized per axis by the extent lying along that axis:
/// x by l, y by w, z by h.
Vec3 normalize_offset(const Vec3& delta, const Extents& extents);
Vec3 denormalize_offset(const Vec3& normalized, const Extents& extents);

/// 1 when the target-canonical point lies in the beta-scaled box
/// |x| <= beta l / 2, |y| <= beta w / 2, |z| <= beta h / 2.
std::vector<int> shape_aware_labels(const PointCloud& points, const Extents& extents, double beta);

/// 1 when the point lies within radius of the origin (target center).
std::vector<int> distance_labels(const PointCloud& points, double radius);

}  // namespace cutrack
