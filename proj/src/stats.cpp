#include "cutrack/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cutrack/serialize.hpp"

namespace cutrack {

void Histogram::add(double v) {
  const double t = (v - lo) / (hi - lo) * static_cast<double>(counts.size());
  const double idx = std::clamp(std::floor(t), 0.0, static_cast<double>(counts.size() - 1));
  ++counts[static_cast<std::size_t>(idx)];
}

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

std::size_t count_distractors(const FrameRecord& frame, double radius_m) {
  if (frame.boxes.empty()) return 0;
  const Vec3& c = frame.boxes.front().box.center();
  std::size_t n = 0;
  for (std::size_t i = 1; i < frame.boxes.size(); ++i) {
    const Vec3& o = frame.boxes[i].box.center();
    if (std::hypot(o.x - c.x, o.y - c.y) < radius_m) ++n;
  }
  return n;
}

std::vector<CategoryStats> category_stats(const std::vector<Sequence>& data, double radius_m) {
  std::vector<CategoryStats> out;
  auto entry = [&](const std::string& name) -> CategoryStats& {
    for (CategoryStats& s : out) {
      if (s.category == name) return s;
    }
    out.emplace_back().category = name;
    return out.back();
  };
  for (const Sequence& seq : data) {
    CategoryStats& s = entry(seq.category);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      const BBox3D& b = seq.target(f);
      ++s.frames;
      s.length.add(b.l());
      s.width.add(b.w());
      s.height.add(b.h());
      s.distractors[std::min<std::size_t>(count_distractors(seq.frames[f], radius_m), 3)]++;
      if (f > 0) {
        const BBox3D& prev = seq.target(f - 1);
        const Vec3 d = to_canonical(b.center(), prev);
        s.dx.add(d.x);
        s.dy.add(d.y);
        s.dz.add(d.z);
        s.dtheta.add(wrap_angle(b.yaw() - prev.yaw()));
      }
    }
  }
  return out;
}

void write_stats_csv(const std::filesystem::path& dir, const std::vector<CategoryStats>& stats) {
  auto dump = [&](const std::string& name, const Histogram& h) {
    std::ostringstream os;
    os << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) os << h.bin_lo(i) << ',' << h.bin_hi(i) << ',' << h.counts[i] << '\n';
    write_file_atomic(dir / (name + ".csv"), os.str());
  };
  for (const CategoryStats& s : stats) {
    const std::string p = s.category + "_";
    dump(p + "length", s.length);
    dump(p + "width", s.width);
    dump(p + "height", s.height);
    dump(p + "dx", s.dx);
    dump(p + "dy", s.dy);
    dump(p + "dz", s.dz);
    dump(p + "dtheta", s.dtheta);
    std::ostringstream os;
    os << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < 4; ++i) {
      os << i << ',';
      if (i < 3) {
        os << i + 1;
      } else {
        os << "inf";
      }
      os << ',' << s.distractors[i] << '\n';
    }
    write_file_atomic(dir / (p + "distractors.csv"), os.str());
  }
}

}  // namespace cutrack
