#include "cutrack/config.hpp"

#include <cstdlib>

namespace cutrack {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix.substr(0, prefix.size() - 1), "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(prefix + it.key(), "unknown key");
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst, const std::string& prefix) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

EncoderConfig parse_encoder(const json& j, std::size_t in_dim) {
  reject_unknown(j, {"stages"}, "encoder.");
  if (!j.contains("stages") || !j["stages"].is_array() || j["stages"].empty()) {
    throw ConfigError("encoder.stages", "expected a non-empty array");
  }
  EncoderConfig e;
  e.in_dim = in_dim;
  std::size_t prev = in_dim;
  for (std::size_t i = 0; i < j["stages"].size(); ++i) {
    const std::string p = "encoder.stages[" + std::to_string(i) + "].";
    const json& s = j["stages"][i];
    reject_unknown(s, {"samples", "out_dim", "k", "radius", "pos_hidden"}, p);
    StageConfig st;
    read(s, "samples", st.samples, p);
    read(s, "out_dim", st.block.out_dim, p);
    read(s, "k", st.block.k, p);
    read(s, "radius", st.block.radius, p);
    read(s, "pos_hidden", st.block.pos_hidden, p);
    st.block.in_dim = prev;
    prev = st.block.out_dim;
    e.stages.push_back(st);
  }
  return e;
}

template <typename F>
auto nested(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    for (const std::string tag : {"unknown key ", "invalid value "}) {
      if (msg.rfind(tag, 0) != 0) continue;
      const std::string rest = msg.substr(tag.size());
      const std::size_t dot = rest.find('.'), colon = rest.find(": ");
      const std::string path = key + rest.substr(dot, colon == std::string::npos ? std::string::npos : colon - dot);
      throw ConfigError(path, colon == std::string::npos ? "unknown key" : rest.substr(colon + 2));
    }
    throw ConfigError(key, msg);
  } catch (const json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, std::optional<std::uint64_t> seed_override) {
  reject_unknown(j,
                 {"paradigm", "alpha", "beta", "seed", "encoder", "head_hidden", "n_t", "n_s", "seg_threshold",
                  "ablation", "train", "synth", "eval_synth"},
                 "");
  RunConfig rc;
  std::string paradigm = "motion";
  read(j, "paradigm", paradigm, "");
  Paradigm p;
  try {
    p = paradigm_from_string(paradigm);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("paradigm", e.what());
  }
  rc.model = ModelConfig::desk_default(p);
  read(j, "seed", rc.seed, "");
  if (seed_override) rc.seed = *seed_override;
  read(j, "alpha", rc.model.alpha, "");
  read(j, "beta", rc.model.beta, "");
  read(j, "head_hidden", rc.model.head_hidden, "");
  read(j, "n_t", rc.model.n_t, "");
  read(j, "n_s", rc.model.n_s, "");
  read(j, "seg_threshold", rc.model.seg_threshold, "");
  if (j.contains("encoder")) rc.model.encoder = parse_encoder(j["encoder"], ModelConfig::input_channels(p));
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    reject_unknown(a, {"adaformer_on", "unified_inputs_on", "unified_objective_on"}, "ablation.");
    read(a, "adaformer_on", rc.model.ablation.adaformer, "ablation.");
    read(a, "unified_inputs_on", rc.model.ablation.unified_inputs, "ablation.");
    read(a, "unified_objective_on", rc.model.ablation.unified_objective, "ablation.");
  }
  if (!(rc.model.alpha > 0)) throw ConfigError("alpha", "must be positive");
  if (!(rc.model.beta > 0)) throw ConfigError("beta", "must be positive");
  nested("model", [&] {
    rc.model.validate();
    return 0;
  });

  const json train = j.value("train", json::object());
  rc.train = nested("train", [&] { return TrainConfig::from_json(train); });
  if (!train.contains("seed")) rc.train.seed = rc.seed;
  const json synth = j.value("synth", json::object());
  rc.synth = nested("synth", [&] { return SynthConfig::from_json(synth); });
  if (!synth.contains("seed")) rc.synth.seed = rc.seed;
  const json eval = j.value("eval_synth", json::object());
  rc.eval_synth = nested("eval_synth", [&] { return SynthConfig::from_json(eval); });
  if (!eval.contains("seed")) rc.eval_synth.seed = rc.seed + 1000003;
  return rc;
}

json RunConfig::to_json() const {
  json m = model.to_json();
  json out = {{"paradigm", m["paradigm"]},
              {"seed", seed},
              {"alpha", model.alpha},
              {"beta", model.beta},
              {"encoder", m["encoder"]},
              {"head_hidden", model.head_hidden},
              {"n_t", model.n_t},
              {"n_s", model.n_s},
              {"seg_threshold", model.seg_threshold},
              {"ablation", m["ablation"]},
              {"train", train.to_json()},
              {"synth", synth.to_json()},
              {"eval_synth", eval_synth.to_json()}};
  return out;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* s = std::getenv("CUTRACK_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError("CUTRACK_SEED", "not an unsigned integer: '" + std::string(s) + "'");
  return v;
}

}  // namespace cutrack
