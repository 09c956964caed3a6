#include "cutrack/pipeline.hpp"

#include <omp.h>

#include <cstdio>
#include <exception>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cutrack/serialize.hpp"

namespace cutrack {

std::vector<TrackResult> track_all(const TrackerModel& model, const std::vector<Sequence>& data, int jobs) {
  std::vector<TrackResult> out(data.size());
  std::vector<std::exception_ptr> errors(data.size());
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = track_sequence(model, TrackingInput::from_sequence(data[i]));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<FrameResult> score_sequence(const TrackResult& result, const Sequence& gt) {
  if (result.boxes.size() != gt.frames.size()) {
    throw std::invalid_argument("sequence " + result.sequence_id + ": " + std::to_string(result.boxes.size()) +
                                " predicted frames, " + std::to_string(gt.frames.size()) + " annotated");
  }
  std::vector<FrameResult> out;
  out.reserve(gt.frames.size());
  for (std::size_t f = 0; f < gt.frames.size(); ++f) {
    if (result.frame_ids[f] != gt.frames[f].frame_id) {
      throw std::invalid_argument("sequence " + result.sequence_id + ": frame id " +
                                  std::to_string(result.frame_ids[f]) + " where " +
                                  std::to_string(gt.frames[f].frame_id) + " was expected");
    }
    out.push_back(frame_result(result.boxes[f], gt.target(f)));
  }
  return out;
}

namespace {

std::vector<CategoryResult> pooled_rows(const std::map<std::string, std::vector<FrameResult>>& by_category) {
  if (by_category.empty()) throw std::invalid_argument("evaluate: no sequences");
  std::vector<CategoryResult> rows;
  for (const auto& [cat, frames] : by_category) rows.push_back(category_result(cat, frames));
  rows.push_back(aggregate_weighted_mean(rows));
  return rows;
}

void pool(std::map<std::string, std::vector<FrameResult>>& by_category, const std::vector<TrackResult>& results,
          const std::vector<Sequence>& gt) {
  std::map<std::string, const Sequence*> index;
  for (const Sequence& s : gt) index[s.sequence_id] = &s;
  for (const TrackResult& r : results) {
    const auto it = index.find(r.sequence_id);
    if (it == index.end()) throw std::invalid_argument("no annotations for sequence " + r.sequence_id);
    const std::vector<FrameResult> frames = score_sequence(r, *it->second);
    auto& dst = by_category[it->second->category];
    dst.insert(dst.end(), frames.begin(), frames.end());
  }
}

}  // namespace

std::vector<CategoryResult> evaluate(const std::vector<TrackResult>& results, const std::vector<Sequence>& gt) {
  std::map<std::string, std::vector<FrameResult>> by_category;
  pool(by_category, results, gt);
  return pooled_rows(by_category);
}

std::string metrics_csv(const std::vector<CategoryResult>& rows) {
  std::ostringstream os;
  os << "category,frames,success,precision\n";
  char buf[64];
  for (const CategoryResult& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", r.success, r.precision);
    os << r.category << ',' << r.frames << ',' << buf << '\n';
  }
  return os.str();
}

std::vector<CategoryResult> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "category,frames,success,precision") {
    throw FormatError("metrics.csv: unexpected header");
  }
  std::vector<CategoryResult> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    CategoryResult r;
    std::string frames, success, precision;
    if (!std::getline(ls, r.category, ',') || !std::getline(ls, frames, ',') || !std::getline(ls, success, ',') ||
        !std::getline(ls, precision)) {
      throw FormatError("metrics.csv: malformed row '" + line + "'");
    }
    try {
      std::size_t used = 0;
      r.frames = std::stoul(frames, &used);
      if (used != frames.size()) throw std::invalid_argument(frames);
      r.success = std::stod(success);
      r.precision = std::stod(precision);
    } catch (const std::exception&) {
      throw FormatError("metrics.csv: malformed number in '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

ExperimentResult run_experiment(const RunConfig& cfg, int jobs, const std::function<void(const StepRecord&)>& on_step) {
  const std::vector<Sequence> train_data = gen_synthetic(cfg.synth);
  TrackerModel model(cfg.model, cfg.seed);
  TrainResult tr = train(model, train_data, cfg.train, on_step);
  const std::vector<Sequence> eval_data = gen_synthetic(cfg.eval_synth);
  std::vector<TrackResult> tracks = track_all(model, eval_data, jobs);
  std::vector<CategoryResult> metrics = evaluate(tracks, eval_data);
  return {std::move(model), std::move(tr), std::move(tracks), std::move(metrics)};
}

std::string sweep_dir_name(const std::string& param, double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", value);
  return param + "_" + buf;
}

std::vector<SweepPoint> run_sweep(const nlohmann::json& base, const std::string& param,
                                  const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& out, int jobs,
                                  std::optional<std::uint64_t> seed_override) {
  if (param != "alpha" && param != "beta") throw ConfigError("param", "must be alpha or beta, got '" + param + "'");
  if (values.empty()) throw ConfigError("values", "empty");
  // Validate every variant before any work.
  std::vector<std::vector<RunConfig>> configs;
  for (double v : values) {
    nlohmann::json j = base;
    j[param] = v;
    std::vector<RunConfig> row;
    if (seeds.empty()) {
      row.push_back(RunConfig::from_json(j, seed_override));
    } else {
      for (std::uint64_t s : seeds) row.push_back(RunConfig::from_json(j, s));
    }
    configs.push_back(std::move(row));
  }

  std::filesystem::create_directories(out);
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepPoint p;
    p.value = values[i];
    const std::filesystem::path dir = out / sweep_dir_name(param, values[i]);
    std::map<std::string, std::vector<FrameResult>> pooled;
    for (const RunConfig& rc : configs[i]) {
      const ExperimentResult r = run_experiment(rc, jobs);
      const std::vector<Sequence> eval_data = gen_synthetic(rc.eval_synth);
      pool(pooled, r.tracks, eval_data);
      const std::filesystem::path seed_dir = dir / ("seed_" + std::to_string(rc.seed));
      std::filesystem::create_directories(seed_dir);
      write_file_atomic(seed_dir / "metrics.csv", metrics_csv(r.metrics));
      p.seeds.push_back(rc.seed);
      p.per_seed.push_back(r.metrics);
    }
    p.metrics = pooled_rows(pooled);
    write_file_atomic(dir / "metrics.csv", metrics_csv(p.metrics));
    points.push_back(std::move(p));
    write_file_atomic(out / "summary.csv", sweep_summary_csv(param, points));
  }
  return points;
}

std::string sweep_summary_csv(const std::string& param, const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "param,value,seeds,frames,success,precision\n";
  char buf[96];
  for (const SweepPoint& p : points) {
    const CategoryResult& m = p.metrics.back();
    std::string seeds;
    for (std::size_t i = 0; i < p.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(p.seeds[i]);
    std::snprintf(buf, sizeof buf, "%g,%s,%zu,%.4f,%.4f", p.value, seeds.c_str(), m.frames, m.success, m.precision);
    os << param << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace cutrack
