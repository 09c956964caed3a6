#include "cutrack/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cutrack {

double Rng::normal(double mean, double stddev) {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Parameter& ParameterStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return *params_[it->second];
}

std::size_t ParameterStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::set_zero(const std::string& prefix) {
  for (auto& p : params_) {
    if (p->name.compare(0, prefix.size(), prefix) == 0) {
      for (auto& v : p->value.data()) v = 0.0;
    }
  }
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng,
               Init init)
    : in_(in_dim), out_(out_dim) {
  if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("linear: dimensions must be positive");
  Tensor w({in_dim, out_dim});
  if (init == Init::kXavier) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (auto& x : w.data()) x = rng.uniform(-bound, bound);
  }
  weight_ = &store.add(name + ".weight", std::move(w));
  bias_ = &store.add(name + ".bias", Tensor({out_dim}));
}

Var Linear::forward(Tape& tape, Var x) const {
  const Shape s = x.shape();
  if (s.empty() || s.back() != in_) {
    throw std::invalid_argument("linear: expected last dimension " + std::to_string(in_) + ", got input " +
                                shape_str(s));
  }
  Var in = s.size() == 2 ? x : ag::reshape(x, {x.value().size() / in_, in_});
  Var y = ag::broadcast_add(ag::matmul(in, tape.param(*weight_)), tape.param(*bias_));
  if (s.size() == 2) return y;
  Shape out_shape = s;
  out_shape.back() = out_;
  return ag::reshape(y, out_shape);
}

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& dims, Rng& rng,
         Init init) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dimension");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(store, name + "." + std::to_string(i), dims[i], dims[i + 1], rng, init);
  }
}

Var Mlp::forward(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(tape, x);
    if (i + 1 < layers_.size()) x = ag::relu(x);
  }
  return x;
}

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, const AdamConfig& cfg, std::int64_t t) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be at least 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(ParameterStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    m_.emplace_back(store[i].value.shape());
    v_.emplace_back(store[i].value.shape());
  }
}

void Adam::step() {
  ++t_;
  for (std::size_t i = 0; i < store_->size(); ++i) {
    Parameter& p = (*store_)[i];
    adam_step(p.value, p.grad, m_[i], v_[i], cfg_, t_);
  }
}

}  // namespace cutrack
