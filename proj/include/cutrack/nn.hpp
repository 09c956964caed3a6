#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cutrack/tensor.hpp"

namespace cutrack {

/// Seeded generator shared by initialization and data sampling. Draws are
/// mapped to doubles by hand so results do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Box-Muller; one draw per call.
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::mt19937_64 engine_;
};

/// Owns every trainable tensor of a model in registration order. Parameter
/// addresses are stable for the lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t numel() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  void set_zero(const std::string& prefix);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

enum class Init { kXavier, kZero };

/// y = x W + b on rows of x.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng,
         Init init = Init::kXavier);

  Var forward(Tape& tape, Var x) const;
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

/// Stack of Linear layers with ReLU between consecutive layers (not after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& dims, Rng& rng,
      Init init = Init::kXavier);

  Var forward(Tape& tape, Var x) const;
  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction; moment buffers are keyed by parameter order.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig cfg);
  /// Applies one update from the gradients currently held in the store.
  void step();
  std::int64_t steps_taken() const { return t_; }

 private:
  ParameterStore* store_;
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

/// Single Adam update of one tensor at step t >= 1. m and v are updated in place.
void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, const AdamConfig& cfg, std::int64_t t);

}  // namespace cutrack
