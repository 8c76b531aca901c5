#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a graph node. Leaves are parameters (require grad) or
// constants; every op in ops.hpp creates a new node that remembers its parents
// and a backward rule when any parent requires grad. backward(root) runs the
// rules in reverse topological order.
//
// Gradient convention: leaf gradients accumulate across backward() calls until
// zero_grads() is called; intermediate gradients are reset at the start of each
// pass.

#include <functional>
#include <memory>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sign/nn/tensor.hpp"

namespace sign::nn {

struct Node {
  Tensor value;
  Tensor grad;  // empty until first touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Grad tensor shaped like value, allocated on demand.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var parameter(Tensor value);
  static Var constant(Tensor value);

  [[nodiscard]] const Tensor& value() const { return node_->value; }
  [[nodiscard]] Tensor& mutable_value() { return node_->value; }
  [[nodiscard]] const Tensor& grad() const { return node_->grad; }
  [[nodiscard]] Tensor& grad_buffer() { return node_->grad_buffer(); }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }
  [[nodiscard]] explicit operator bool() const { return node_ != nullptr; }

 private:
  std::shared_ptr<Node> node_;
};

// Creates an op result. When no parent requires grad the node is a constant
// and the backward rule is dropped.
[[nodiscard]] Var make_result(Tensor value, std::vector<Var> parents,
                              std::function<void(Node&)> backward_fn);

// Throws Error(NonScalarRoot) unless root has exactly one element.
void backward(const Var& root);

void zero_grads(std::span<Var> params);

// While alive, ops on this thread record no graph: results are constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool grad_enabled() noexcept;

// While alive, every piecewise-linear op on this thread (relu, abs, fused
// conv relu) folds the sign of each input into digest(). Two forward passes
// with equal digests took the same branch at every kink.
class ActivationPatternRecorder {
 public:
  ActivationPatternRecorder();
  ~ActivationPatternRecorder();
  ActivationPatternRecorder(const ActivationPatternRecorder&) = delete;
  ActivationPatternRecorder& operator=(const ActivationPatternRecorder&) = delete;

  [[nodiscard]] std::uint64_t digest() const noexcept { return digest_; }

 private:
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::uint64_t* previous_;
};

void record_activation_pattern(std::span<const double> inputs) noexcept;

}  // namespace sign::nn
