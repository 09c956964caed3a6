#include "cutrack/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace cutrack::kernels {

namespace {

void check_group_args(const PointCloud& cloud, std::span<const std::size_t> centers,
                      std::span<const Mat3> transforms, double radius, std::size_t k) {
  if (cloud.empty()) throw std::invalid_argument("group: empty cloud");
  if (!(radius > 0.0)) throw std::invalid_argument("group: radius must be positive");
  if (k < 1) throw std::invalid_argument("group: k must be at least 1");
  if (!transforms.empty() && transforms.size() != centers.size()) {
    throw std::invalid_argument("group: " + std::to_string(transforms.size()) + " transforms for " +
                                std::to_string(centers.size()) + " centers");
  }
  for (std::size_t c : centers) {
    if (c >= cloud.size()) throw std::out_of_range("group: center index " + std::to_string(c));
  }
}

struct Best {
  double d;
  std::size_t i;
};

}  // namespace

GroupIndex transformed_ball_query(const PointCloud& cloud, std::size_t center_index, const Mat3& transform,
                                  double radius, std::size_t k) {
  if (cloud.empty()) throw std::invalid_argument("deform_group: empty cloud");
  if (center_index >= cloud.size()) throw std::out_of_range("deform_group: center index out of range");
  if (!(radius > 0.0)) throw std::invalid_argument("deform_group: radius must be positive");
  if (k < 1) throw std::invalid_argument("deform_group: k must be at least 1");

  const Vec3 center = cloud[center_index];
  const double r2 = radius * radius;
  std::vector<std::pair<double, std::size_t>> inside;
  std::size_t nearest = 0;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = transform_point(transform, cloud[i] - center).squared_norm();
    if (d <= r2) inside.emplace_back(d, i);
    if (d < nearest_d) {
      nearest_d = d;
      nearest = i;
    }
  }

  GroupIndex g;
  g.center_index = static_cast<std::ptrdiff_t>(center_index);
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

std::vector<GroupIndex> group_serial(const PointCloud& cloud, std::span<const std::size_t> centers,
                                     std::span<const Mat3> transforms, double radius, std::size_t k) {
  check_group_args(cloud, centers, transforms, radius, k);
  std::vector<GroupIndex> out(centers.size());
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const Mat3& t = transforms.empty() ? kIdentity3 : transforms[j];
    out[j] = transformed_ball_query(cloud, centers[j], t, radius, k);
  }
  return out;
}

std::vector<GroupIndex> group_parallel(const PointCloud& cloud, std::span<const std::size_t> centers,
                                       std::span<const Mat3> transforms, double radius, std::size_t k) {
  check_group_args(cloud, centers, transforms, radius, k);
  std::vector<GroupIndex> out(centers.size());
  const auto n = static_cast<std::ptrdiff_t>(centers.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    const Mat3& t = transforms.empty() ? kIdentity3 : transforms[u];
    out[u] = transformed_ball_query(cloud, centers[u], t, radius, k);
  }
  return out;
}

std::vector<std::size_t> fps_serial(const PointCloud& cloud, std::size_t m) {
  return farthest_point_sample(cloud, m);
}

std::vector<std::size_t> fps_parallel(const PointCloud& cloud, std::size_t m) {
  if (m < 1) throw std::invalid_argument("farthest_point_sample: m must be at least 1");
  if (m > cloud.size()) {
    throw std::invalid_argument("insufficient points: requested " + std::to_string(m) + " of " +
                                std::to_string(cloud.size()));
  }
  const auto n = static_cast<std::ptrdiff_t>(cloud.size());
  std::vector<double> min_d2(cloud.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picks{0};
  picks.reserve(m);
  std::size_t cur = 0;
  min_d2[cur] = -1.0;
  while (picks.size() < m) {
    const Vec3 c = cloud[cur];
    Best best{-1.0, 0};
#pragma omp parallel
    {
      Best local{-1.0, 0};
#pragma omp for schedule(static) nowait
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const double d = (cloud[u] - c).squared_norm();
        if (d < min_d2[u]) min_d2[u] = d;
        if (min_d2[u] > local.d) local = {min_d2[u], u};
      }
#pragma omp critical
      {
        if (local.d > best.d || (local.d == best.d && local.i < best.i)) best = local;
      }
    }
    cur = best.i;
    picks.push_back(cur);
    min_d2[cur] = -1.0;
  }
  return picks;
}

}  // namespace cutrack::kernels
