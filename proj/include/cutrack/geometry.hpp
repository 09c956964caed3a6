#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace cutrack {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

using PointCloud = std::vector<Vec3>;

/// Box extents in meters. l runs along local x, w along local y, h along z (up).
struct Extents {
  double w = 1.0;
  double h = 1.0;
  double l = 1.0;

  friend bool operator==(const Extents&, const Extents&) = default;
  double volume() const { return w * h * l; }
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Oriented 3D box rotated about the up axis. Extents must be positive; yaw is
/// normalized to (-pi, pi] on construction.
class BBox3D {
 public:
  BBox3D() = default;
  BBox3D(Vec3 center, Extents extents, double yaw);
  BBox3D(double cx, double cy, double cz, double w, double h, double l, double yaw)
      : BBox3D(Vec3{cx, cy, cz}, Extents{w, h, l}, yaw) {}

  const Vec3& center() const { return center_; }
  const Extents& extents() const { return extents_; }
  double w() const { return extents_.w; }
  double h() const { return extents_.h; }
  double l() const { return extents_.l; }
  double yaw() const { return yaw_; }
  double volume() const { return extents_.volume(); }

  BBox3D with_center(Vec3 c) const { return {c, extents_, yaw_}; }
  BBox3D with_extents(Extents e) const { return {center_, e, yaw_}; }

  /// Bird's-eye-view corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> bev_corners() const;
  /// All eight corners; bottom face first.
  std::array<Vec3, 8> corners() const;

  friend bool operator==(const BBox3D&, const BBox3D&) = default;

 private:
  Vec3 center_{};
  Extents extents_{};
  double yaw_ = 0.0;
};

/// Indices of a neighborhood gathered around a center.
struct GroupIndex {
  static constexpr std::ptrdiff_t kNoCenter = -1;
  std::ptrdiff_t center_index = kNoCenter;
  std::vector<std::size_t> member_indices;
  /// Set when no point fell inside the ball and the globally nearest point was used.
  bool fallback = false;
};

double rotated_iou_3d(const BBox3D& a, const BBox3D& b);
double center_distance(const BBox3D& a, const BBox3D& b);

/// Area of the intersection of two convex counter-clockwise polygons.
double convex_intersection_area(std::span<const std::array<double, 2>> subject,
                                std::span<const std::array<double, 2>> clip);

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m);

GroupIndex ball_query_topk(const PointCloud& cloud, const Vec3& center, double radius, std::size_t k);

PointCloud crop_points_in_box(const PointCloud& cloud, const BBox3D& box);
bool point_in_box(const Vec3& p, const BBox3D& box);

Vec3 to_canonical(const Vec3& p, const BBox3D& box);
Vec3 from_canonical(const Vec3& p, const BBox3D& box);
PointCloud to_canonical(const PointCloud& points, const BBox3D& box);
PointCloud from_canonical(const PointCloud& points, const BBox3D& box);

}  // namespace cutrack
