#pragma once

// Reverse-mode automatic differentiation over Tensor.
//
// A Var is a shared handle to a graph node. Ops build new nodes whose backward
// closures accumulate into their parents' gradients; `backward(root)` walks
// the graph in reverse topological order. Gradients accumulate across calls
// until `zero_grad()` is invoked on the leaves.

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "unigan/tensor.hpp"

namespace unigan::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node& self)> backward_fn;

  // Gradient buffer shaped like `value`, allocated on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  // Direct access for optimisers; bypasses the graph.
  Tensor& mutable_value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  void zero_grad() const;
  // Same value, cut off from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1; root must hold a single element.
void backward(const Var& root);

bool grad_enabled();

// Ops created while a guard is alive record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise arithmetic; operands must have identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);
Var add_scalar(const Var& a, Scalar s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(Scalar s, const Var& a) { return scale(a, s); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& x);
Var leaky_relu(const Var& x, Scalar slope);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
// abs'(0) is taken as 0.
Var abs(const Var& x);
Var square(const Var& x);
Var log(const Var& x);
// Gradient passes only where lo < x < hi.
Var clamp(const Var& x, Scalar lo, Scalar hi);

// Reductions to a one-element tensor of shape {1}.
Var sum(const Var& x);
Var mean(const Var& x);

// NCHW structural ops.
Var concat_channels(std::span<const Var> parts);
Var concat_channels(std::initializer_list<Var> parts);
Var slice_channels(const Var& x, std::int64_t begin, std::int64_t count);
Var reflection_pad(const Var& x, std::int64_t pad);
// x[..., :, 1:] - x[..., :, :-1]
Var diff_w(const Var& x);
// x[..., 1:, :] - x[..., :-1, :]
Var diff_h(const Var& x);

// weight: [out, in, k, k]; bias: [out] or undefined Var.
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::int64_t stride, std::int64_t pad);
// weight: [in, out, k, k] (the adjoint layout); produces out_h x out_w.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, std::int64_t stride, std::int64_t pad,
                     std::int64_t out_h, std::int64_t out_w);
// Non-overlapping k x k average pooling; H and W must be divisible by k.
Var avg_pool2d(const Var& x, std::int64_t k);
// N x C x H x W -> N x C x 1 x 1.
Var global_avg_pool(const Var& x);
// Per-sample, per-channel normalisation, no affine parameters.
Var instance_norm(const Var& x, Scalar eps = 1e-5);

}  // namespace unigan::ag
