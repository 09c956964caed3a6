#pragma once

// KITTI tracking ingestion. Camera-frame labels are mapped into the LiDAR
// convention used everywhere else (x forward, y left, z up) without the
// per-drive calibration:
//   center = (z_cam, -x_cam, -y_cam + h / 2)   (KITTI locations are bottom centers)
//   yaw    = -rotation_y - pi / 2
//   extents (w, h, l) unchanged.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cutrack/datasets.hpp"
#include "cutrack/geometry.hpp"

namespace cutrack {

class KittiParseError : public std::runtime_error {
 public:
  KittiParseError(std::size_t column, const std::string& what)
      : std::runtime_error("column " + std::to_string(column) + ": " + what), column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

struct KittiLabel {
  std::int64_t frame = 0;
  int track_id = 0;
  std::string category;
  BBox3D box;
};

/// N x (x, y, z, reflectance) little-endian float32; reflectance is dropped.
PointCloud kitti_read_velodyne(const std::filesystem::path& path);

/// nullopt for DontCare rows.
std::optional<KittiLabel> kitti_parse_label_line(std::string_view line);

/// Frames of one track from a drive: <velodyne_dir>/%06d.bin plus a label file.
/// The track's box is first in each frame; other labelled objects follow.
Sequence kitti_load_track(const std::filesystem::path& velodyne_dir, const std::filesystem::path& label_file,
                          int track_id);

}  // namespace cutrack
