#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over small dense tensors.
//
// A Tape records every operation applied to its variables; backward() walks
// the records in reverse creation order, which is a valid reverse
// topological order because an operation can only consume variables that
// already exist. Tapes share no state, so independent tapes may be used from
// different threads. Values are f64 throughout.

namespace coforge::ad {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor filled(std::vector<std::size_t> shape, double v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  bool is_scalar() const { return data.size() == 1; }
  double item() const;
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

std::string shape_string(const std::vector<std::size_t>& shape);

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const;
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // backward hook: reads its own output gradient and accumulates into the
  // gradients of its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an operation result. Used by the op implementations.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  // Accumulates d(loss)/d(node) into every node reachable from `loss`.
  // A tape supports a single backward pass.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient accumulation target of node `id`; only valid during backward.
  std::vector<double>& grad_buffer(std::size_t id) { return nodes_[id].grad.data; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// --- operations --------------------------------------------------------------

Var matmul(const Var& a, const Var& b);   // [m,k] x [k,n]
Var transpose(const Var& a);              // [m,n] -> [n,m]
Var add(const Var& a, const Var& b);      // same shape, or [m,n] + [n] bias row
Var sub(const Var& a, const Var& b);      // same shape
Var mul(const Var& a, const Var& b);      // elementwise, same shape
Var scale(const Var& a, double c);        // c * a
Var add_scalar(const Var& a, double c);   // a + c
Var mul_scalar(const Var& a, const Var& s);  // s * a with s a one-element tensor
Var index(const Var& a, std::size_t i);   // a.data[i] as a scalar
Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var softmax(const Var& a);                // over the last dimension, per row
Var sum(const Var& a);
Var mean(const Var& a);
// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(const Var& logits, std::span<const int> labels);
// softmax((log theta + noise) / tau) over a 1-D theta.
Var gumbel_softmax(const Var& theta, std::span<const double> noise, double tau);

// Straight-through estimator: forward applies `quantizer` to the values,
// backward passes the incoming gradient through unchanged.
using Quantizer = std::function<std::vector<double>(std::span<const double>)>;
Var ste_quantize(const Var& w, const Quantizer& quantizer);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace coforge::ad
