#pragma once

#include <filesystem>
#include <string>

#include "cutrack/datasets.hpp"
#include "cutrack/trackers.hpp"

namespace fixture {

/// Two small stages so a forward pass costs a few milliseconds.
inline cutrack::ModelConfig tiny_model(cutrack::Paradigm p) {
  using namespace cutrack;
  ModelConfig cfg;
  cfg.paradigm = p;
  cfg.encoder.in_dim = ModelConfig::input_channels(p);
  StageConfig s0, s1;
  s0.samples = 32;
  s0.block = {cfg.encoder.in_dim, 8, 4, 0.5, 8, true};
  s1.samples = 16;
  s1.block = {8, 8, 4, 1.0, 8, true};
  cfg.encoder.stages = {s0, s1};
  cfg.head_hidden = {16};
  cfg.n_t = 32;
  cfg.n_s = 32;
  return cfg;
}

inline cutrack::SynthConfig small_synth(std::size_t sequences, std::size_t frames, std::uint64_t seed) {
  cutrack::SynthConfig c;
  c.sequences = sequences;
  c.frames = frames;
  c.seed = seed;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cutrack_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixture
