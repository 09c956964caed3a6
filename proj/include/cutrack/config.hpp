#pragma once

// Run configuration: one JSON document holding the model, training and
// synthetic-data settings. Unknown keys and invalid values are reported with
// their dotted key path.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cutrack/datasets.hpp"
#include "cutrack/trackers.hpp"
#include "cutrack/training.hpp"

namespace cutrack {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : std::runtime_error(key_path + ": " + what), key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model = ModelConfig::desk_default(Paradigm::kMotion);
  TrainConfig train;
  SynthConfig synth;       ///< training data for gen and sweep
  SynthConfig eval_synth;  ///< held-out data for sweep

  /// Absent keys take defaults (alpha 1.0, beta 0.4). seed_override, when
  /// set, replaces the "seed" key. The seed also seeds training and data
  /// generation unless train.seed / synth.seed are given explicitly.
  static RunConfig from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = std::nullopt);
  nlohmann::json to_json() const;
};

/// Parses CUTRACK_SEED if set.
std::optional<std::uint64_t> seed_from_env();

}  // namespace cutrack
