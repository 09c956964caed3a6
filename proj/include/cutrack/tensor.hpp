#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cutrack {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double item() const;

  Tensor reshaped(Shape s) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad();
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Ordered record of primitive ops. Nodes are appended in evaluation order, so
/// reverse order is a valid topological order for the backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);  ///< differentiable input, gradient readable via grad()
  Var param(Parameter& p); ///< gradient is accumulated into p.grad on backward()

  /// Appends an op result. fn is called during backward only when the node
  /// has an incoming gradient and at least one parent requires grad.
  Var record(Tensor value, std::vector<int> parents, BackwardFn fn);

  /// Seeds d(root)/d(root)=1 for a single-element root and runs reverse-mode.
  void backward(Var root);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer for a node, allocated zeroed on first access.
  Tensor& grad(int id);
  /// Gradient of a node after backward(); zero tensor if none flowed.
  Tensor grad_of(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ag {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var sigmoid(Var a);
/// Elementwise clamp; gradient is zero where the input is clipped.
Var clamp(Var a, double lo, double hi);
Var softmax(Var a, std::size_t axis);
Var sum(Var a, std::size_t axis);
Var mean(Var a, std::size_t axis);
Var sum_all(Var a);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
/// Row gather on a rank-2 tensor; indices may repeat.
Var gather_rows(Var a, std::span<const std::size_t> indices);
/// Adds b to every trailing block of a whose shape equals b's shape.
Var broadcast_add(Var a, Var b);
Var reshape(Var a, Shape shape);

}  // namespace ag

}  // namespace cutrack
