#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "cutrack/datasets.hpp"

namespace cutrack {

/// Fixed-width bins on [lo, hi); values outside land in the edge bins.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  Histogram() = default;
  Histogram(double lo, double hi, std::size_t bins) : lo(lo), hi(hi), counts(bins, 0) {}
  void add(double v);
  double bin_lo(std::size_t i) const { return lo + (hi - lo) * static_cast<double>(i) / counts.size(); }
  double bin_hi(std::size_t i) const { return bin_lo(i + 1); }
  std::size_t total() const;
};

inline constexpr double kDefaultDistractorRadiusM = 5.0;

struct CategoryStats {
  std::string category;
  std::size_t frames = 0;
  Histogram length{0.0, 8.0, 32};
  Histogram width{0.0, 4.0, 16};
  Histogram height{0.0, 4.0, 16};
  /// Inter-frame target motion in the previous box's frame.
  Histogram dx{-2.0, 2.0, 40};
  Histogram dy{-1.0, 1.0, 20};
  Histogram dz{-1.0, 1.0, 20};
  Histogram dtheta{-0.5, 0.5, 20};
  /// Frames with 0, 1, 2 and >= 3 other objects within the radius (BEV).
  std::array<std::size_t, 4> distractors{};
};

/// Objects other than the target whose BEV center lies within radius_m of it.
std::size_t count_distractors(const FrameRecord& frame, double radius_m);

/// One entry per category, in order of first appearance.
std::vector<CategoryStats> category_stats(const std::vector<Sequence>& data,
                                          double distractor_radius_m = kDefaultDistractorRadiusM);

/// <dir>/<category>_<histogram>.csv with columns bin_lo, bin_hi, count.
void write_stats_csv(const std::filesystem::path& dir, const std::vector<CategoryStats>& stats);

}  // namespace cutrack
