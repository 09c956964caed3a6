#include "cutrack/kitti.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <vector>

#include "cutrack/serialize.hpp"

namespace cutrack {

namespace fs = std::filesystem;

PointCloud kitti_read_velodyne(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 16 != 0) {
    throw FormatError("velodyne scan " + path.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of 16");
  }
  auto f32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    return static_cast<double>(std::bit_cast<float>(v));
  };
  PointCloud cloud(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) cloud[i] = {f32(16 * i), f32(16 * i + 4), f32(16 * i + 8)};
  return cloud;
}

namespace {

double parse_number(std::string_view tok, std::size_t column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw KittiParseError(column, "not a number: '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t j = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > j) out.push_back(line.substr(j, i - j));
  }
  return out;
}

}  // namespace

std::optional<KittiLabel> kitti_parse_label_line(std::string_view line) {
  const std::vector<std::string_view> f = split(line);
  if (f.size() > 2 && f[2] == "DontCare") return std::nullopt;
  if (f.size() < 17) throw KittiParseError(f.size(), "missing field (line has " + std::to_string(f.size()) + " of 17)");
  double v[17] = {};
  for (std::size_t c = 0; c < 17; ++c) {
    if (c != 2) v[c] = parse_number(f[c], c);
  }
  KittiLabel out;
  out.frame = static_cast<std::int64_t>(v[0]);
  out.track_id = static_cast<int>(v[1]);
  if (static_cast<double>(out.frame) != v[0] || static_cast<double>(out.track_id) != v[1]) {
    throw KittiParseError(static_cast<double>(out.frame) != v[0] ? 0 : 1, "expected an integer");
  }
  out.category = std::string(f[2]);
  const double h = v[10], w = v[11], l = v[12];
  const double x = v[13], y = v[14], z = v[15], ry = v[16];
  try {
    out.box = BBox3D(z, -x, -y + 0.5 * h, w, h, l, -ry - 0.5 * std::numbers::pi);
  } catch (const std::invalid_argument& e) {
    throw KittiParseError(10, e.what());
  }
  return out;
}

Sequence kitti_load_track(const fs::path& velodyne_dir, const fs::path& label_file, int track_id) {
  std::istringstream in(read_file(label_file));
  std::map<std::int64_t, std::vector<KittiLabel>> by_frame;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      if (auto lab = kitti_parse_label_line(line)) by_frame[lab->frame].push_back(*lab);
    } catch (const KittiParseError& e) {
      throw FormatError(label_file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  Sequence seq;
  char id[64];
  std::snprintf(id, sizeof id, "%s_track%04d", label_file.stem().string().c_str(), track_id);
  seq.sequence_id = id;
  for (const auto& [frame, labels] : by_frame) {
    FrameRecord fr;
    fr.frame_id = frame;
    for (const KittiLabel& l : labels) {
      if (l.track_id == track_id) fr.boxes.insert(fr.boxes.begin(), {l.track_id, l.category, l.box});
    }
    if (fr.boxes.empty()) continue;
    for (const KittiLabel& l : labels) {
      if (l.track_id != track_id) fr.boxes.push_back({l.track_id, l.category, l.box});
    }
    seq.category = fr.boxes.front().category;
    char name[32];
    std::snprintf(name, sizeof name, "%06lld.bin", static_cast<long long>(frame));
    fr.cloud = kitti_read_velodyne(velodyne_dir / name);
    seq.frames.push_back(std::move(fr));
  }
  if (seq.frames.empty()) throw FormatError("track " + std::to_string(track_id) + " not found in " + label_file.string());
  return seq;
}

}  // namespace cutrack
