#include "cutrack/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "cutrack/nn.hpp"
#include "cutrack/serialize.hpp"

namespace cutrack {

namespace fs = std::filesystem;
using nlohmann::json;

const BBox3D& Sequence::target(std::size_t frame) const {
  const FrameRecord& f = frames.at(frame);
  if (f.boxes.empty()) throw std::invalid_argument("sequence " + sequence_id + ": frame has no target box");
  return f.boxes.front().box;
}

void Sequence::validate() const {
  if (frames.empty()) throw std::invalid_argument("sequence " + sequence_id + ": no frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].boxes.empty()) {
      throw std::invalid_argument("sequence " + sequence_id + ": frame " + std::to_string(frames[i].frame_id) +
                                  " has no target box");
    }
    if (i > 0 && frames[i].frame_id <= frames[i - 1].frame_id) {
      throw std::invalid_argument("sequence " + sequence_id + ": frame ids not strictly increasing");
    }
  }
}

std::vector<CategoryTemplate> default_categories() {
  // Weights follow the KITTI test-frame proportions of the four classes.
  return {
      {"car", {1.8, 1.6, 4.2}, {0.1, 0.1, 0.3}, ShapeKind::kBoxShell, 0.8, 0.4, 6424},
      {"pedestrian", {0.6, 1.75, 0.8}, {0.08, 0.1, 0.1}, ShapeKind::kCylinderShell, 0.15, 0.05, 6088},
      {"van", {2.0, 2.1, 5.1}, {0.15, 0.2, 0.4}, ShapeKind::kBoxShell, 0.8, 0.4, 1248},
      {"cyclist", {0.8, 1.7, 1.8}, {0.1, 0.1, 0.15}, ShapeKind::kBoxShell, 0.4, 0.15, 308},
  };
}

void SynthConfig::validate() const {
  if (categories.empty()) throw std::invalid_argument("synth: no categories");
  for (const CategoryTemplate& c : categories) {
    if (!(c.mean.w > 0 && c.mean.h > 0 && c.mean.l > 0)) throw std::invalid_argument("synth: " + c.name + " mean extents must be positive");
    if (c.stddev.w < 0 || c.stddev.h < 0 || c.stddev.l < 0) throw std::invalid_argument("synth: " + c.name + " stddevs must be non-negative");
    if (c.speed_mean < 0 || c.speed_std < 0 || !(c.weight > 0)) throw std::invalid_argument("synth: " + c.name + " speed/weight invalid");
  }
  if (sequences < 1 || frames < 1) throw std::invalid_argument("synth: sequences and frames must be positive");
  if (!(surface_density > 0)) throw std::invalid_argument("synth: surface_density must be positive");
  if (!(background_density > 0)) throw std::invalid_argument("synth: background_density must be positive");
  if (interior_fraction < 0 || dropout < 0 || dropout >= 1) throw std::invalid_argument("synth: interior_fraction/dropout out of range");
  if (point_noise < 0 || yaw_rate_std < 0 || position_noise < 0 || yaw_noise < 0 || speed_scale < 0) {
    throw std::invalid_argument("synth: noise stddevs and speed_scale must be non-negative");
  }
  if (!(ground_radius > 0) || !(distractor_radius > 0)) throw std::invalid_argument("synth: radii must be positive");
}

namespace {

const char* shape_name(ShapeKind s) { return s == ShapeKind::kBoxShell ? "box" : "cylinder"; }

ShapeKind shape_from(const std::string& s) {
  if (s == "box") return ShapeKind::kBoxShell;
  if (s == "cylinder") return ShapeKind::kCylinderShell;
  throw std::invalid_argument("synth: unknown shape '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      throw std::invalid_argument("unknown key " + where + it.key());
    }
  }
}

}  // namespace

json SynthConfig::to_json() const {
  json cats = json::array();
  for (const CategoryTemplate& c : categories) {
    cats.push_back({{"name", c.name},
                    {"mean", {c.mean.w, c.mean.h, c.mean.l}},
                    {"stddev", {c.stddev.w, c.stddev.h, c.stddev.l}},
                    {"shape", shape_name(c.shape)},
                    {"speed_mean", c.speed_mean},
                    {"speed_std", c.speed_std},
                    {"weight", c.weight}});
  }
  return {{"categories", cats},
          {"sequences", sequences},
          {"frames", frames},
          {"surface_density", surface_density},
          {"interior_fraction", interior_fraction},
          {"dropout", dropout},
          {"point_noise", point_noise},
          {"speed_scale", speed_scale},
          {"yaw_rate_std", yaw_rate_std},
          {"position_noise", position_noise},
          {"yaw_noise", yaw_noise},
          {"distractors_max", distractors_max},
          {"distractor_radius", distractor_radius},
          {"background_density", background_density},
          {"ground_radius", ground_radius},
          {"clutter_objects", clutter_objects},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"categories", "sequences", "frames", "surface_density", "interior_fraction", "dropout",
                  "point_noise", "speed_scale", "yaw_rate_std", "position_noise", "yaw_noise", "distractors_max",
                  "distractor_radius", "background_density", "ground_radius", "clutter_objects", "seed"},
                 "synth.");
  SynthConfig c;
  if (j.contains("categories")) {
    c.categories.clear();
    for (std::size_t i = 0; i < j["categories"].size(); ++i) {
      const json& cj = j["categories"][i];
      reject_unknown(cj, {"name", "mean", "stddev", "shape", "speed_mean", "speed_std", "weight"},
                     "synth.categories[" + std::to_string(i) + "].");
      CategoryTemplate t;
      t.name = cj.at("name").get<std::string>();
      const auto m = cj.at("mean").get<std::array<double, 3>>();
      t.mean = {m[0], m[1], m[2]};
      if (cj.contains("stddev")) {
        const auto s = cj["stddev"].get<std::array<double, 3>>();
        t.stddev = {s[0], s[1], s[2]};
      }
      t.shape = shape_from(cj.value("shape", std::string("box")));
      t.speed_mean = cj.value("speed_mean", 0.0);
      t.speed_std = cj.value("speed_std", 0.0);
      t.weight = cj.value("weight", 1.0);
      c.categories.push_back(t);
    }
  }
  read_field(j, "sequences", c.sequences, "synth.");
  read_field(j, "frames", c.frames, "synth.");
  read_field(j, "surface_density", c.surface_density, "synth.");
  read_field(j, "interior_fraction", c.interior_fraction, "synth.");
  read_field(j, "dropout", c.dropout, "synth.");
  read_field(j, "point_noise", c.point_noise, "synth.");
  read_field(j, "speed_scale", c.speed_scale, "synth.");
  read_field(j, "yaw_rate_std", c.yaw_rate_std, "synth.");
  read_field(j, "position_noise", c.position_noise, "synth.");
  read_field(j, "yaw_noise", c.yaw_noise, "synth.");
  read_field(j, "distractors_max", c.distractors_max, "synth.");
  read_field(j, "distractor_radius", c.distractor_radius, "synth.");
  read_field(j, "background_density", c.background_density, "synth.");
  read_field(j, "ground_radius", c.ground_radius, "synth.");
  read_field(j, "clutter_objects", c.clutter_objects, "synth.");
  read_field(j, "seed", c.seed, "synth.");
  c.validate();
  return c;
}

PointCloud sample_object_points(const Extents& e, ShapeKind shape, std::size_t surface_count,
                                std::size_t interior_count, std::uint64_t seed) {
  Rng rng(seed);
  const double hl = 0.5 * e.l, hw = 0.5 * e.w, hh = 0.5 * e.h;
  PointCloud pts;
  pts.reserve(surface_count + interior_count);
  if (shape == ShapeKind::kBoxShell) {
    // Top and four sides; the bottom faces the ground.
    const double top = e.l * e.w, front = e.w * e.h, side = e.l * e.h;
    const double total = top + 2 * front + 2 * side;
    for (std::size_t i = 0; i < surface_count; ++i) {
      const double u = rng.uniform() * total;
      const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
      if (u < top) {
        pts.push_back({a * hl, b * hw, hh});
      } else if (u < top + 2 * front) {
        pts.push_back({u < top + front ? hl : -hl, a * hw, b * hh});
      } else {
        pts.push_back({a * hl, u < total - side ? hw : -hw, b * hh});
      }
    }
    for (std::size_t i = 0; i < interior_count; ++i) {
      const double x = rng.uniform(-hl, hl), y = rng.uniform(-hw, hw), z = rng.uniform(-hh, hh);
      pts.push_back({x, y, z});
    }
  } else {
    // Elliptic cylinder with semi-axes l/2 (x) and w/2 (y).
    const double side = std::numbers::pi * (hl + hw) * e.h;
    const double top = std::numbers::pi * hl * hw;
    for (std::size_t i = 0; i < surface_count; ++i) {
      if (rng.uniform() * (side + top) < side) {
        const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double z = rng.uniform(-hh, hh);
        pts.push_back({hl * std::cos(t), hw * std::sin(t), z});
      } else {
        const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double r = std::sqrt(rng.uniform());
        pts.push_back({hl * r * std::cos(t), hw * r * std::sin(t), hh});
      }
    }
    for (std::size_t i = 0; i < interior_count; ++i) {
      const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double r = std::sqrt(rng.uniform());
      const double z = rng.uniform(-hh, hh);
      pts.push_back({hl * r * std::cos(t), hw * r * std::sin(t), z});
    }
  }
  return pts;
}

namespace {

double surface_area(const Extents& e, ShapeKind shape) {
  if (shape == ShapeKind::kBoxShell) return e.l * e.w + 2 * e.w * e.h + 2 * e.l * e.h;
  return std::numbers::pi * (0.5 * (e.l + e.w) * e.h + 0.25 * e.l * e.w);
}

double clipped_normal(Rng& rng, double stddev) { return std::clamp(rng.normal(0.0, stddev), -3 * stddev, 3 * stddev); }

// Points are emitted at float precision so a PCF round trip is lossless.
Vec3 to_f32(const Vec3& p) {
  return {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)};
}

struct Mover {
  ObjectBox obj;
  ShapeKind shape;
  double speed;
  double yaw_rate;
};

class SceneBuilder {
 public:
  SceneBuilder(const SynthConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {}

  const CategoryTemplate& pick_category() {
    double total = 0;
    for (const auto& c : cfg_.categories) total += c.weight;
    double u = rng_.uniform() * total;
    for (const auto& c : cfg_.categories) {
      if (u < c.weight) return c;
      u -= c.weight;
    }
    return cfg_.categories.back();
  }

  Extents draw_extents(const CategoryTemplate& c) {
    auto draw = [&](double m, double s) { return std::max(0.2 * m, m + rng_.normal(0.0, s)); };
    const double w = draw(c.mean.w, c.stddev.w);
    const double h = draw(c.mean.h, c.stddev.h);
    const double l = draw(c.mean.l, c.stddev.l);
    return {w, h, l};
  }

  Mover make_mover(int id, const CategoryTemplate& c, double x, double y) {
    const Extents e = draw_extents(c);
    const double yaw = rng_.uniform(-std::numbers::pi, std::numbers::pi);
    const double speed = std::max(0.0, c.speed_mean + rng_.normal(0.0, c.speed_std)) * cfg_.speed_scale;
    const double yaw_rate = rng_.normal(0.0, cfg_.yaw_rate_std);
    return {{id, c.name, BBox3D({x, y, 0.5 * e.h}, e, yaw)}, c.shape, speed, yaw_rate};
  }

  void advance(Mover& m) {
    const BBox3D& b = m.obj.box;
    const double yaw = b.yaw() + m.yaw_rate + rng_.normal(0.0, cfg_.yaw_noise);
    const Vec3 c{b.center().x + m.speed * std::cos(yaw) + rng_.normal(0.0, cfg_.position_noise),
                 b.center().y + m.speed * std::sin(yaw) + rng_.normal(0.0, cfg_.position_noise), b.center().z};
    m.obj.box = BBox3D(c, b.extents(), yaw);
  }

  void emit_object(PointCloud& cloud, const BBox3D& box, ShapeKind shape) {
    const double area = surface_area(box.extents(), shape);
    const auto n_surf = static_cast<std::size_t>(std::lround(cfg_.surface_density * area));
    const auto n_int = static_cast<std::size_t>(std::lround(cfg_.interior_fraction * static_cast<double>(n_surf)));
    for (const Vec3& p : sample_object_points(box.extents(), shape, n_surf, n_int, rng_.next())) {
      if (rng_.uniform() < cfg_.dropout) continue;
      const Vec3 q{p.x + clipped_normal(rng_, cfg_.point_noise), p.y + clipped_normal(rng_, cfg_.point_noise),
                   p.z + clipped_normal(rng_, cfg_.point_noise)};
      cloud.push_back(to_f32(from_canonical(q, box)));
    }
  }

  void emit_ground(PointCloud& cloud, const Vec3& around) {
    const double area = std::numbers::pi * cfg_.ground_radius * cfg_.ground_radius;
    const auto n = static_cast<std::size_t>(std::lround(cfg_.background_density * area));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = rng_.uniform(-std::numbers::pi, std::numbers::pi);
      const double r = cfg_.ground_radius * std::sqrt(rng_.uniform());
      cloud.push_back(
          to_f32({around.x + r * std::cos(t), around.y + r * std::sin(t), clipped_normal(rng_, cfg_.point_noise)}));
    }
  }

 private:
  const SynthConfig& cfg_;
  Rng& rng_;
};

}  // namespace

std::vector<Sequence> gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Sequence> out;
  out.reserve(cfg.sequences);
  for (std::size_t s = 0; s < cfg.sequences; ++s) {
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + s);
    SceneBuilder scene(cfg, rng);
    Sequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "seq_%04zu", s);
    seq.sequence_id = id;

    const CategoryTemplate& tc = scene.pick_category();
    seq.category = tc.name;
    std::vector<Mover> movers;
    movers.push_back(scene.make_mover(0, tc, rng.uniform(-3, 3), rng.uniform(-3, 3)));
    const Vec3 start = movers[0].obj.box.center();

    const std::size_t n_dis = rng.index(cfg.distractors_max + 1);
    for (std::size_t d = 0; d < n_dis; ++d) {
      const CategoryTemplate& dc = scene.pick_category();
      const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double half = 0.5 * (movers[0].obj.box.l() + dc.mean.l) + 0.5;
      const double r = half + (cfg.distractor_radius - half > 0 ? rng.uniform(0, cfg.distractor_radius - half) : 0.0);
      movers.push_back(scene.make_mover(static_cast<int>(d + 1), dc, start.x + r * std::cos(t), start.y + r * std::sin(t)));
    }

    struct Clutter {
      BBox3D box;
      ShapeKind shape;
    };
    std::vector<Clutter> clutter;
    for (std::size_t c = 0; c < cfg.clutter_objects; ++c) {
      const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double r = rng.uniform(3.0, cfg.ground_radius + 4.0);
      const bool pole = rng.uniform() < 0.5;
      const Extents e = pole ? Extents{0.2, rng.uniform(2.0, 4.0), 0.2}
                             : Extents{rng.uniform(0.6, 1.4), rng.uniform(0.5, 1.2), rng.uniform(0.6, 1.4)};
      clutter.push_back({BBox3D({start.x + r * std::cos(t), start.y + r * std::sin(t), 0.5 * e.h}, e,
                                rng.uniform(-std::numbers::pi, std::numbers::pi)),
                         pole ? ShapeKind::kCylinderShell : ShapeKind::kBoxShell});
    }

    for (std::size_t f = 0; f < cfg.frames; ++f) {
      if (f > 0) {
        for (Mover& m : movers) scene.advance(m);
      }
      FrameRecord fr;
      fr.frame_id = static_cast<std::int64_t>(f);
      for (const Mover& m : movers) {
        fr.boxes.push_back(m.obj);
        scene.emit_object(fr.cloud, m.obj.box, m.shape);
      }
      for (const Clutter& c : clutter) scene.emit_object(fr.cloud, c.box, c.shape);
      scene.emit_ground(fr.cloud, movers[0].obj.box.center());
      seq.frames.push_back(std::move(fr));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

}  // namespace

void write_pcf(const fs::path& path, const PointCloud& cloud) {
  std::string bytes = "PCF1";
  bytes.reserve(8 + 12 * cloud.size());
  put_u32(bytes, static_cast<std::uint32_t>(cloud.size()));
  for (const Vec3& p : cloud) {
    for (double v : {p.x, p.y, p.z}) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file_atomic(path, bytes);
}

PointCloud read_pcf(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 || std::string_view(bytes).substr(0, 4) != "PCF1") {
    throw FormatError("bad magic in " + path.string());
  }
  if (bytes.size() < 8) throw FormatError("truncated header in " + path.string());
  const std::uint32_t count = get_u32(bytes, 4);
  const std::size_t need = 8 + 12 * static_cast<std::size_t>(count);
  if (bytes.size() < need) {
    throw FormatError("truncated file " + path.string() + ": " + std::to_string(count) + " points need " +
                      std::to_string(need) + " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > need) {
    throw FormatError("count mismatch in " + path.string() + ": header says " + std::to_string(count) +
                      " points but payload holds " + std::to_string((bytes.size() - 8) / 12.0));
  }
  PointCloud cloud(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = 8 + 12 * i;
    cloud[i] = {std::bit_cast<float>(get_u32(bytes, off)), std::bit_cast<float>(get_u32(bytes, off + 4)),
                std::bit_cast<float>(get_u32(bytes, off + 8))};
  }
  return cloud;
}

json sequence_meta(const Sequence& seq) {
  json frames = json::array();
  for (const FrameRecord& f : seq.frames) {
    json boxes = json::array();
    for (const ObjectBox& b : f.boxes) {
      const BBox3D& x = b.box;
      boxes.push_back({{"track_id", b.track_id},
                       {"category", b.category},
                       {"cx", x.center().x},
                       {"cy", x.center().y},
                       {"cz", x.center().z},
                       {"w", x.w()},
                       {"h", x.h()},
                       {"l", x.l()},
                       {"yaw", x.yaw()}});
    }
    frames.push_back({{"frame_id", f.frame_id}, {"boxes", boxes}});
  }
  return {{"sequence_id", seq.sequence_id}, {"category", seq.category}, {"frames", frames}};
}

namespace {

std::string frame_file(std::int64_t frame_id) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06lld.pcf", static_cast<long long>(frame_id));
  return name;
}

}  // namespace

void write_sequence(const fs::path& dir, const Sequence& seq) {
  seq.validate();
  fs::create_directories(dir);
  for (const FrameRecord& f : seq.frames) write_pcf(dir / frame_file(f.frame_id), f.cloud);
  write_file_atomic(dir / "meta.json", sequence_meta(seq).dump(1) + "\n");
}

Sequence read_sequence(const fs::path& dir) {
  const fs::path meta = dir / "meta.json";
  json j;
  try {
    j = json::parse(read_file(meta));
  } catch (const json::parse_error& e) {
    throw FormatError(meta.string() + ": " + e.what());
  }
  Sequence seq;
  try {
    seq.sequence_id = j.at("sequence_id").get<std::string>();
    seq.category = j.at("category").get<std::string>();
    for (const json& fj : j.at("frames")) {
      FrameRecord f;
      f.frame_id = fj.at("frame_id").get<std::int64_t>();
      for (const json& bj : fj.at("boxes")) {
        f.boxes.push_back({bj.at("track_id").get<int>(), bj.at("category").get<std::string>(),
                           BBox3D(bj.at("cx").get<double>(), bj.at("cy").get<double>(), bj.at("cz").get<double>(),
                                  bj.at("w").get<double>(), bj.at("h").get<double>(), bj.at("l").get<double>(),
                                  bj.at("yaw").get<double>())});
      }
      f.cloud = read_pcf(dir / frame_file(f.frame_id));
      seq.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw FormatError(meta.string() + ": " + e.what());
  }
  seq.validate();
  return seq;
}

void write_dataset(const fs::path& root, const std::vector<Sequence>& seqs) {
  for (const Sequence& s : seqs) write_sequence(root / s.sequence_id, s);
}

std::vector<Sequence> read_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Sequence> out;
  for (const fs::path& d : dirs) out.push_back(read_sequence(d));
  return out;
}

}  // namespace cutrack
