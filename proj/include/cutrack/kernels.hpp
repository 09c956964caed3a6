#pragma once

// Data-parallel grouping and sampling kernels. Every kernel has a serial
// reference twin with the same signature; the parallel versions must produce
// identical output and are checked against the serial ones in tests.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cutrack/geometry.hpp"

namespace cutrack::kernels {

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

inline constexpr Mat3 kIdentity3{1, 0, 0, 0, 1, 0, 0, 0, 1};

inline Vec3 transform_point(const Mat3& m, const Vec3& v) {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

/// Gathers the k points nearest to cloud[center_index] under the metric
/// |T (c_i - c_center)| <= radius, which is the unit-sphere test on
/// T ((c_i - c_center) / radius). Padding follows ball_query_topk.
GroupIndex transformed_ball_query(const PointCloud& cloud, std::size_t center_index, const Mat3& transform,
                                  double radius, std::size_t k);

/// One group per center. transforms is empty (identity everywhere) or has one
/// entry per center.
std::vector<GroupIndex> group_serial(const PointCloud& cloud, std::span<const std::size_t> centers,
                                     std::span<const Mat3> transforms, double radius, std::size_t k);
std::vector<GroupIndex> group_parallel(const PointCloud& cloud, std::span<const std::size_t> centers,
                                       std::span<const Mat3> transforms, double radius, std::size_t k);

std::vector<std::size_t> fps_serial(const PointCloud& cloud, std::size_t m);
std::vector<std::size_t> fps_parallel(const PointCloud& cloud, std::size_t m);

}  // namespace cutrack::kernels
