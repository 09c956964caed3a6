#include "cutrack/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cutrack {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// View of a shape as (outer, len, inner) around one axis.
struct AxisView {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) throw std::invalid_argument(std::string(op) + ": axis out of range for " + shape_str(s));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class F>
Var unary(Var a, F&& forward, std::function<double(double x, double y)> dydx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const int ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, dydx](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(x[i], y[i]);
  });
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive: " + shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive: " + shape_str(shape_));
  }
  if (data_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                shape_str(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != data_.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(s));
  }
  return Tensor(std::move(s), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Parameter::zero_grad() { std::fill(grad.data().begin(), grad.data().end(), 0.0); }

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn fn) {
  if (!value.all_finite()) throw std::domain_error("non-finite value produced by op " + shape_str(value.shape()));
  Node n;
  n.value = std::move(value);
  for (int p : parents) {
    if (nodes_[static_cast<std::size_t>(p)].requires_grad) n.requires_grad = true;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::grad_of(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: variable belongs to another tape");
  if (value(root.id).size() != 1) {
    throw std::invalid_argument("backward: root must have one element, got " + shape_str(value(root.id).shape()));
  }
  grad(root.id)[0] += 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) accumulate(n.param->grad, n.grad);
  }
}

namespace ag {

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) shape_error("matmul", A.shape(), B.shape());
  const std::size_t n = A.dim(0), k = A.dim(1), m = B.dim(1);
  Tensor C({n, m});
  Map(C.data().data(), n, m).noalias() = MapC(A.data().data(), n, k) * MapC(B.data().data(), k, m);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib, n, k, m](Tape& t, int self) {
    const Tensor& G = t.grad(self);
    const MapC g(G.data().data(), n, m);
    if (t.requires_grad(ia)) {
      const Tensor& B = t.value(ib);
      Map(t.grad(ia).data().data(), n, k).noalias() += g * MapC(B.data().data(), k, m).transpose();
    }
    if (t.requires_grad(ib)) {
      const Tensor& A = t.value(ia);
      Map(t.grad(ib).data().data(), k, m).noalias() += MapC(A.data().data(), n, k).transpose() * g;
    }
  });
}

namespace {

Var binary_same_shape(Var a, Var b, const char* op, double sa, double sb, bool product) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_error(op, A.shape(), B.shape());
  Tensor C(A.shape());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = product ? A[i] * B[i] : sa * A[i] + sb * B[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib, sa, sb, product](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      if (product) {
        const Tensor& B = t.value(ib);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sa * g[i];
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      if (product) {
        const Tensor& A = t.value(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sb * g[i];
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary_same_shape(a, b, "add", 1.0, 1.0, false); }
Var sub(Var a, Var b) { return binary_same_shape(a, b, "sub", 1.0, -1.0, false); }
Var hadamard(Var a, Var b) { return binary_same_shape(a, b, "hadamard", 0.0, 0.0, true); }

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax(Var a, std::size_t axis) {
  const Tensor& X = a.value();
  const AxisView v = axis_view(X.shape(), axis, "softmax");
  Tensor Y(X.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      double mx = X[base];
      for (std::size_t j = 1; j < v.len; ++j) mx = std::max(mx, X[base + j * v.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < v.len; ++j) {
        const double e = std::exp(X[base + j * v.inner] - mx);
        Y[base + j * v.inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < v.len; ++j) Y[base + j * v.inner] /= s;
    }
  }
  const int ia = a.id;
  return a.tape->record(std::move(Y), {ia}, [ia, v](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& G = t.grad(self);
    const Tensor& Y = t.value(self);
    Tensor& GX = t.grad(ia);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.len * v.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.len; ++j) dot += G[base + j * v.inner] * Y[base + j * v.inner];
        for (std::size_t j = 0; j < v.len; ++j) {
          const std::size_t i = base + j * v.inner;
          GX[i] += Y[i] * (G[i] - dot);
        }
      }
    }
  });
}

namespace {

Var reduce_axis(Var a, std::size_t axis, bool average) {
  const Tensor& X = a.value();
  const AxisView v = axis_view(X.shape(), axis, average ? "mean" : "sum");
  Tensor Y(drop_axis(X.shape(), axis));
  const double f = average ? 1.0 / static_cast<double>(v.len) : 1.0;
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < v.len; ++j) {
      const double* row = X.data().data() + (o * v.len + j) * v.inner;
      double* dst = Y.data().data() + o * v.inner;
      for (std::size_t in = 0; in < v.inner; ++in) dst[in] += row[in];
    }
  }
  if (average) {
    for (auto& y : Y.data()) y *= f;
  }
  const int ia = a.id;
  return a.tape->record(std::move(Y), {ia}, [ia, v, f](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& G = t.grad(self);
    Tensor& GX = t.grad(ia);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t j = 0; j < v.len; ++j) {
        double* dst = GX.data().data() + (o * v.len + j) * v.inner;
        const double* g = G.data().data() + o * v.inner;
        for (std::size_t in = 0; in < v.inner; ++in) dst[in] += f * g[in];
      }
    }
  });
}

}  // namespace

Var sum(Var a, std::size_t axis) { return reduce_axis(a, axis, false); }
Var mean(Var a, std::size_t axis) { return reduce_axis(a, axis, true); }

Var sum_all(Var a) {
  const Tensor& X = a.value();
  double s = 0.0;
  for (double x : X.data()) s += x;
  const int ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia}, [ia](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self)[0];
    for (auto& gx : t.grad(ia).data()) gx += g;
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].value().shape();
  if (axis >= s0.size()) throw std::invalid_argument("concat: axis out of range for " + shape_str(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const Var& p : parts) {
    const Shape& s = p.value().shape();
    if (s.size() != s0.size()) shape_error("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) shape_error("concat", s0, s);
    }
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisView v = axis_view(out_shape, axis, "concat");
  Tensor Y(out_shape);
  std::vector<int> ids;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& X = parts[p].value();
    const std::size_t block = lens[p] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(X.data().data() + o * block, block, Y.data().data() + o * v.len * v.inner + offset * v.inner);
    }
    offset += lens[p];
    ids.push_back(parts[p].id);
  }
  return parts[0].tape->record(std::move(Y), ids, [ids, lens, v](Tape& t, int self) {
    const Tensor& G = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t block = lens[p] * v.inner;
      if (t.requires_grad(ids[p])) {
        Tensor& GX = t.grad(ids[p]);
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* src = G.data().data() + o * v.len * v.inner + offset * v.inner;
          double* dst = GX.data().data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += lens[p];
    }
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const Tensor& X = a.value();
  if (X.rank() != 2) throw std::invalid_argument("gather_rows: expected rank-2 input, got " + shape_str(X.shape()));
  if (indices.empty()) throw std::invalid_argument("gather_rows: empty index list");
  const std::size_t d = X.dim(1);
  Tensor Y({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= X.dim(0)) {
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                              shape_str(X.shape()));
    }
    std::copy_n(X.data().data() + indices[r] * d, d, Y.data().data() + r * d);
  }
  const int ia = a.id;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.tape->record(std::move(Y), {ia}, [ia, idx = std::move(idx), d](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& G = t.grad(self);
    Tensor& GX = t.grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* src = G.data().data() + r * d;
      double* dst = GX.data().data() + idx[r] * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var broadcast_add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Shape& sa = A.shape();
  const Shape& sb = B.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    shape_error("broadcast_add", sa, sb);
  }
  const std::size_t inner = B.size();
  const std::size_t outer = A.size() / inner;
  Tensor C(sa);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) C[o * inner + i] = A[o * inner + i] + B[i];
  }
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib, inner, outer](Tape& t, int self) {
    const Tensor& G = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad(ia), G);
    if (t.requires_grad(ib)) {
      Tensor& GB = t.grad(ib);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) GB[i] += G[o * inner + i];
      }
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor Y = a.value().reshaped(std::move(shape));
  const int ia = a.id;
  return a.tape->record(std::move(Y), {ia}, [ia](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    accumulate(t.grad(ia), t.grad(self));
  });
}

}  // namespace ag

}  // namespace cutrack
