#include "cutrack/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

namespace cutrack {

namespace {

constexpr double kCollinearTol = 1e-9;

using Pt2 = std::array<double, 2>;

double cross(const Pt2& o, const Pt2& a, const Pt2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double polygon_area(std::span<const Pt2> poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Pt2& p = poly[i];
    const Pt2& q = poly[(i + 1) % poly.size()];
    acc += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * std::abs(acc);
}

// Intersection of segment p->q with the infinite line a->b.
Pt2 line_intersect(const Pt2& p, const Pt2& q, const Pt2& a, const Pt2& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

auto box_key(const BBox3D& b) {
  return std::make_tuple(b.center().x, b.center().y, b.center().z, b.w(), b.h(), b.l(), b.yaw());
}

void require_cloud_finite(const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud[i].finite()) throw std::invalid_argument("non-finite point at index " + std::to_string(i));
  }
}

}  // namespace

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

BBox3D::BBox3D(Vec3 center, Extents extents, double yaw)
    : center_(center), extents_(extents), yaw_(wrap_angle(yaw)) {
  if (!(extents.w > 0.0) || !(extents.h > 0.0) || !(extents.l > 0.0)) {
    throw std::invalid_argument("box extents must be positive");
  }
  if (!center.finite() || !std::isfinite(yaw) || !std::isfinite(extents.w) || !std::isfinite(extents.h) ||
      !std::isfinite(extents.l)) {
    throw std::invalid_argument("box fields must be finite");
  }
}

std::array<Pt2, 4> BBox3D::bev_corners() const {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  const double hl = 0.5 * extents_.l;
  const double hw = 0.5 * extents_.w;
  const std::array<Pt2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Pt2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {center_.x + c * local[i][0] - s * local[i][1], center_.y + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

std::array<Vec3, 8> BBox3D::corners() const {
  const auto bev = bev_corners();
  std::array<Vec3, 8> out{};
  const double z0 = center_.z - 0.5 * extents_.h;
  const double z1 = center_.z + 0.5 * extents_.h;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {bev[i][0], bev[i][1], z0};
    out[i + 4] = {bev[i][0], bev[i][1], z1};
  }
  return out;
}

double convex_intersection_area(std::span<const Pt2> subject, std::span<const Pt2> clip) {
  std::vector<Pt2> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Pt2& a = clip[e];
    const Pt2& b = clip[(e + 1) % clip.size()];
    std::vector<Pt2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Pt2& cur = input[i];
      const Pt2& prev = input[(i + input.size() - 1) % input.size()];
      const double dc = cross(a, b, cur);
      const double dp = cross(a, b, prev);
      const bool cur_in = dc >= -kCollinearTol;
      const bool prev_in = dp >= -kCollinearTol;
      if (cur_in) {
        if (!prev_in) output.push_back(line_intersect(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(line_intersect(prev, cur, a, b));
      }
    }
  }
  return polygon_area(output);
}

double rotated_iou_3d(const BBox3D& a_in, const BBox3D& b_in) {
  // Fixed argument order makes the result bit-symmetric.
  const bool swap = box_key(b_in) < box_key(a_in);
  const BBox3D& a = swap ? b_in : a_in;
  const BBox3D& b = swap ? a_in : b_in;

  const double bottom = std::max(a.center().z - 0.5 * a.h(), b.center().z - 0.5 * b.h());
  const double top = std::min(a.center().z + 0.5 * a.h(), b.center().z + 0.5 * b.h());
  const double dz = top - bottom;
  if (dz <= 0.0) return 0.0;

  const auto pa = a.bev_corners();
  const auto pb = b.bev_corners();
  const double area = convex_intersection_area(pa, pb);
  const double inter = area * dz;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_distance(const BBox3D& a, const BBox3D& b) { return (a.center() - b.center()).norm(); }

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m) {
  if (m < 1) throw std::invalid_argument("farthest_point_sample: m must be at least 1");
  if (m > cloud.size()) {
    throw std::invalid_argument("insufficient points: requested " + std::to_string(m) + " of " +
                                std::to_string(cloud.size()));
  }
  std::vector<std::size_t> picks;
  picks.reserve(m);
  std::vector<double> min_d2(cloud.size(), std::numeric_limits<double>::infinity());
  std::size_t cur = 0;
  picks.push_back(cur);
  min_d2[cur] = -1.0;  // picked points never win again
  while (picks.size() < m) {
    const Vec3 c = cloud[cur];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double d = (cloud[i] - c).squared_norm();
      if (d < min_d2[i]) min_d2[i] = d;
      if (min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    cur = best;
    picks.push_back(cur);
    min_d2[cur] = -1.0;
  }
  return picks;
}

GroupIndex ball_query_topk(const PointCloud& cloud, const Vec3& center, double radius, std::size_t k) {
  if (cloud.empty()) throw std::invalid_argument("ball_query_topk: empty cloud");
  if (!(radius > 0.0)) throw std::invalid_argument("ball_query_topk: radius must be positive");
  if (k < 1) throw std::invalid_argument("ball_query_topk: k must be at least 1");

  const double r2 = radius * radius;
  std::vector<std::pair<double, std::size_t>> inside;
  std::size_t nearest = 0;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = (cloud[i] - center).squared_norm();
    if (d <= r2) inside.emplace_back(d, i);
    if (d < nearest_d) {
      nearest_d = d;
      nearest = i;
    }
  }

  GroupIndex g;
  g.member_indices.reserve(k);
  if (inside.empty()) {
    g.fallback = true;
    g.member_indices.assign(k, nearest);
    return g;
  }
  const std::size_t take = std::min(k, inside.size());
  std::partial_sort(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(take), inside.end());
  for (std::size_t i = 0; i < take; ++i) g.member_indices.push_back(inside[i].second);
  while (g.member_indices.size() < k) g.member_indices.push_back(inside.front().second);
  return g;
}

Vec3 to_canonical(const Vec3& p, const BBox3D& box) {
  const Vec3 d = p - box.center();
  const double c = std::cos(box.yaw());
  const double s = std::sin(box.yaw());
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

Vec3 from_canonical(const Vec3& p, const BBox3D& box) {
  const double c = std::cos(box.yaw());
  const double s = std::sin(box.yaw());
  return Vec3{c * p.x - s * p.y, s * p.x + c * p.y, p.z} + box.center();
}

PointCloud to_canonical(const PointCloud& points, const BBox3D& box) {
  PointCloud out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(to_canonical(p, box));
  return out;
}

PointCloud from_canonical(const PointCloud& points, const BBox3D& box) {
  PointCloud out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(from_canonical(p, box));
  return out;
}

bool point_in_box(const Vec3& p, const BBox3D& box) {
  const Vec3 q = to_canonical(p, box);
  return std::abs(q.x) <= 0.5 * box.l() && std::abs(q.y) <= 0.5 * box.w() && std::abs(q.z) <= 0.5 * box.h();
}

PointCloud crop_points_in_box(const PointCloud& cloud, const BBox3D& box) {
  require_cloud_finite(cloud);
  PointCloud out;
  for (const auto& p : cloud) {
    if (point_in_box(p, box)) out.push_back(p);
  }
  return out;
}

}  // namespace cutrack
