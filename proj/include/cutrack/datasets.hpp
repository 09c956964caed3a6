#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutrack/geometry.hpp"

namespace cutrack {

struct ObjectBox {
  int track_id = 0;
  std::string category;
  BBox3D box;

  friend bool operator==(const ObjectBox&, const ObjectBox&) = default;
};

struct FrameRecord {
  std::int64_t frame_id = 0;
  PointCloud cloud;
  std::vector<ObjectBox> boxes;  ///< the tracked target first
};

/// A tracklet: the target is the first box of every frame.
struct Sequence {
  std::string sequence_id;
  std::string category;
  std::vector<FrameRecord> frames;

  const BBox3D& target(std::size_t frame) const;
  /// Throws std::invalid_argument unless every frame has a target and frame ids increase.
  void validate() const;
};

enum class ShapeKind { kBoxShell, kCylinderShell };

struct CategoryTemplate {
  std::string name;
  Extents mean;
  Extents stddev;
  ShapeKind shape = ShapeKind::kBoxShell;
  double speed_mean = 0.0;  ///< meters per frame
  double speed_std = 0.0;
  double weight = 1.0;      ///< relative sampling frequency
};

/// Car, pedestrian, van and cyclist templates.
std::vector<CategoryTemplate> default_categories();

struct SynthConfig {
  std::vector<CategoryTemplate> categories = default_categories();
  std::size_t sequences = 10;
  std::size_t frames = 20;
  double surface_density = 40.0;   ///< object points per square meter of surface
  double interior_fraction = 0.3;  ///< extra volumetric returns, relative to the surface count
  double dropout = 0.2;            ///< per-point drop probability
  double point_noise = 0.01;       ///< meters
  double speed_scale = 1.0;
  double yaw_rate_std = 0.02;      ///< radians per frame, drawn once per object
  double position_noise = 0.02;    ///< meters per frame
  double yaw_noise = 0.005;        ///< radians per frame
  std::size_t distractors_max = 3; ///< uniform in [0, max]
  double distractor_radius = 6.0;  ///< meters from the target's start
  double background_density = 10.0; ///< ground points per square meter
  double ground_radius = 8.0;      ///< meters around the target
  std::size_t clutter_objects = 8; ///< static poles and bushes
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static SynthConfig from_json(const nlohmann::json& j);
};

std::vector<Sequence> gen_synthetic(const SynthConfig& cfg);

/// Surface (and optional interior) samples of an object in its own canonical frame.
PointCloud sample_object_points(const Extents& e, ShapeKind shape, std::size_t surface_count,
                                std::size_t interior_count, std::uint64_t seed);

void write_pcf(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_pcf(const std::filesystem::path& path);

nlohmann::json sequence_meta(const Sequence& seq);

/// <dir>/meta.json plus <dir>/frame_%06d.pcf.
void write_sequence(const std::filesystem::path& dir, const Sequence& seq);
Sequence read_sequence(const std::filesystem::path& dir);

/// One sequence directory per sequence under root, in name order.
void write_dataset(const std::filesystem::path& root, const std::vector<Sequence>& seqs);
std::vector<Sequence> read_dataset(const std::filesystem::path& root);

}  // namespace cutrack
