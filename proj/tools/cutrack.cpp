// Command-line front end: gen, train, track, eval, stats, sweep, gradcheck, bench.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cutrack/config.hpp"
#include "cutrack/gradcheck_suite.hpp"
#include "cutrack/pipeline.hpp"
#include "cutrack/serialize.hpp"
#include "cutrack/stats.hpp"

namespace fs = std::filesystem;
using namespace cutrack;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitGradcheck = 4;

struct MissingFile : std::runtime_error {
  explicit MissingFile(const fs::path& p) : std::runtime_error("no such file or directory: " + p.string()) {}
};

void require(const fs::path& p) {
  if (!fs::exists(p)) throw MissingFile(p);
}

nlohmann::json load_config_json(const fs::path& p) {
  require(p);
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
}

RunConfig load_config(const fs::path& p) { return RunConfig::from_json(load_config_json(p), seed_from_env()); }

std::vector<Sequence> load_data(const fs::path& dir) {
  require(dir);
  return read_dataset(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

template <typename T>
std::vector<T> split_list(const std::string& s, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError(key, "not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified-component 3D single object tracking toolkit"};
  app.require_subcommand(1);

  fs::path config, out, data, model_path, results;
  std::string split = "train";
  int jobs = 1;

  auto* gen = app.add_subcommand("gen", "Synthesize a dataset into sequence directories");
  gen->add_option("--config", config, "Run configuration JSON")->required();
  gen->add_option("--out", out, "Output root")->required();
  gen->add_option("--split", split, "train (synth) or eval (eval_synth)")->check(CLI::IsMember({"train", "eval"}));

  fs::path curve;
  auto* trn = app.add_subcommand("train", "Train a tracker");
  trn->add_option("--config", config)->required();
  trn->add_option("--data", data, "Training sequences")->required();
  trn->add_option("--out", out, "Model manifest (.cutm)")->required();
  trn->add_option("--curve", curve, "Optional loss-curve CSV");

  auto* trk = app.add_subcommand("track", "One-pass tracking over every sequence");
  trk->add_option("--model", model_path)->required();
  trk->add_option("--data", data)->required();
  trk->add_option("--out", out, "results.json")->required();
  trk->add_option("--jobs", jobs, "Worker cap")->check(CLI::NonNegativeNumber);

  auto* evl = app.add_subcommand("eval", "Success/Precision per category and weighted mean");
  evl->add_option("--results", results)->required();
  evl->add_option("--data", data)->required();
  evl->add_option("--out", out, "metrics.csv")->required();

  double radius = kDefaultDistractorRadiusM;
  auto* sts = app.add_subcommand("stats", "Size, motion and distractor histograms");
  sts->add_option("--data", data)->required();
  sts->add_option("--out", out, "Output directory")->required();
  sts->add_option("--radius", radius, "Distractor radius in meters")->check(CLI::PositiveNumber);

  std::string param, values, seeds;
  auto* swp = app.add_subcommand("sweep", "End-to-end runs over alpha or beta values");
  swp->add_option("--config", config)->required();
  swp->add_option("--param", param)->required()->check(CLI::IsMember({"alpha", "beta"}));
  swp->add_option("--values", values, "Comma-separated values")->required();
  swp->add_option("--seeds", seeds, "Comma-separated seeds; default is the configured seed");
  swp->add_option("--out", out)->required();
  swp->add_option("--jobs", jobs)->check(CLI::NonNegativeNumber);

  auto* gck = app.add_subcommand("gradcheck", "Finite-difference gradient verification suite");

  std::string sizes = "64,128,256,512";
  std::size_t runs = 100;
  auto* bch = app.add_subcommand("bench", "Preprocess/forward/postprocess latency");
  bch->add_option("--model", model_path)->required();
  bch->add_option("--sizes", sizes, "Comma-separated search point counts");
  bch->add_option("--runs", runs)->check(CLI::PositiveNumber);
  bch->add_option("--out", out, "CSV path; stdout when absent");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const RunConfig rc = load_config(config);
      const std::vector<Sequence> seqs = gen_synthetic(split == "train" ? rc.synth : rc.eval_synth);
      write_dataset(out, seqs);
      std::cout << "wrote " << seqs.size() << " sequences to " << out.string() << '\n';
    } else if (*trn) {
      const RunConfig rc = load_config(config);
      const std::vector<Sequence> seqs = load_data(data);
      TrackerModel model(rc.model, rc.seed);
      const TrainResult r = train(model, seqs, rc.train, [](const StepRecord& s) {
        if (s.step % 100 == 0) std::printf("step %zu loss %.5f\n", s.step, s.loss);
      });
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      model.save(out);
      if (!curve.empty()) write_text(curve, loss_curve_csv(r));
      std::cout << "saved " << out.string() << '\n';
    } else if (*trk) {
      require(model_path);
      const TrackerModel model = TrackerModel::load(model_path);
      const std::vector<Sequence> seqs = load_data(data);
      write_text(out, results_to_json(track_all(model, seqs, jobs)).dump(1) + "\n");
      std::cout << "tracked " << seqs.size() << " sequences\n";
    } else if (*evl) {
      require(results);
      const auto tracks = results_from_json(nlohmann::json::parse(read_file(results)));
      const std::string csv = metrics_csv(evaluate(tracks, load_data(data)));
      write_text(out, csv);
      std::cout << csv;
    } else if (*sts) {
      fs::create_directories(out);
      write_stats_csv(out, category_stats(load_data(data), radius));
    } else if (*swp) {
      const nlohmann::json base = load_config_json(config);
      const std::vector<double> vs = split_list<double>(values, "values");
      const std::vector<std::uint64_t> ss = seeds.empty() ? std::vector<std::uint64_t>{}
                                                          : split_list<std::uint64_t>(seeds, "seeds");
      const auto points = run_sweep(base, param, vs, ss, out, jobs, seed_from_env());
      std::cout << sweep_summary_csv(param, points);
    } else if (*gck) {
      bool ok = true;
      for (const SuiteCase& c : full_gradcheck_suite()) {
        std::printf("%-44s %s  max %.3e  tol %.0e  n=%zu  worst %s\n", c.name.c_str(), c.pass() ? "PASS" : "FAIL",
                    c.max_rel_error, c.tolerance, c.checked, c.worst.c_str());
        ok = ok && c.pass();
      }
      return ok ? 0 : kExitGradcheck;
    } else if (*bch) {
      require(model_path);
      const TrackerModel model = TrackerModel::load(model_path);
      const std::string csv = latency_csv(latency_bench(model, split_list<std::size_t>(sizes, "sizes"), runs));
      if (out.empty()) {
        std::cout << csv;
      } else {
        write_text(out, csv);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.key_path() << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingFile& e) {
    std::cerr << e.what() << '\n';
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
