#include "cutrack/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cutrack::ag {

Var bce_with_logits(Var logits, std::span<const int> labels) {
  const Tensor& x = logits.value();
  if (x.size() != labels.size()) {
    throw std::invalid_argument("bce_with_logits: " + std::to_string(labels.size()) + " labels for logits " +
                                shape_str(x.shape()));
  }
  const double n = static_cast<double>(x.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    // log(1 + exp(-|x|)) + max(x, 0) - x y
    loss += std::log1p(std::exp(-std::abs(x[i]))) + std::max(x[i], 0.0) - x[i] * labels[i];
  }
  std::vector<int> y(labels.begin(), labels.end());
  const int ia = logits.id;
  return logits.tape->record(Tensor::scalar(loss / n), {ia}, [ia, y = std::move(y), n](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self)[0];
    const Tensor& x = t.value(ia);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      gx[i] += g * (p - y[i]) / n;
    }
  });
}

Var smooth_l1(Var pred, const Tensor& target, std::span<const std::size_t> rows) {
  const Tensor& p = pred.value();
  if (p.shape() != target.shape() || p.rank() != 2) {
    throw std::invalid_argument("smooth_l1: incompatible shapes " + shape_str(p.shape()) + " and " +
                                shape_str(target.shape()));
  }
  std::vector<std::size_t> sel(rows.begin(), rows.end());
  if (sel.empty()) {
    for (std::size_t r = 0; r < p.dim(0); ++r) sel.push_back(r);
  }
  const std::size_t cols = p.dim(1);
  const double n = static_cast<double>(sel.size() * cols);
  double loss = 0.0;
  for (std::size_t r : sel) {
    if (r >= p.dim(0)) throw std::out_of_range("smooth_l1: row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = std::abs(p.at(r, c) - target.at(r, c));
      loss += d < 1.0 ? 0.5 * d * d : d - 0.5;
    }
  }
  const int ia = pred.id;
  return pred.tape->record(Tensor::scalar(loss / n), {ia},
                           [ia, target, sel = std::move(sel), cols, n](Tape& t, int self) {
                             if (!t.requires_grad(ia)) return;
                             const double g = t.grad(self)[0];
                             const Tensor& p = t.value(ia);
                             Tensor& gp = t.grad(ia);
                             for (std::size_t r : sel) {
                               for (std::size_t c = 0; c < cols; ++c) {
                                 const double d = p.at(r, c) - target.at(r, c);
                                 const double dd = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
                                 gp.at(r, c) += g * dd / n;
                               }
                             }
                           });
}

}  // namespace cutrack::ag
