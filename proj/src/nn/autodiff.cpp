#include "sign/nn/autodiff.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "sign/error.hpp"

namespace sign::nn {
namespace {
thread_local bool t_grad_enabled = true;
thread_local std::uint64_t* t_pattern = nullptr;
}  // namespace

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

ActivationPatternRecorder::ActivationPatternRecorder() : previous_(t_pattern) { t_pattern = &digest_; }
ActivationPatternRecorder::~ActivationPatternRecorder() { t_pattern = previous_; }

void record_activation_pattern(std::span<const double> inputs) noexcept {
  if (t_pattern == nullptr) return;
  std::uint64_t h = *t_pattern;
  for (double v : inputs) {
    const std::uint64_t side = v > 0.0 ? 1 : (v < 0.0 ? 2 : 3);
    h = (h ^ side) * 0x100000001b3ULL;
  }
  *t_pattern = h;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw Error(ErrorCode::ShapeMismatch, "buffer of " + std::to_string(data_.size()) +
                                              " values for shape " + shape_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                    [](const Var& p) { return p.requires_grad(); });
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (const Var& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root || root.value().size() != 1) {
    throw Error(ErrorCode::NonScalarRoot,
                "backward needs a scalar root, got shape " +
                    (root ? shape_string(root.shape()) : std::string("<null>")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Node* node : order) {
    if (node->backward_fn) node->grad_buffer().fill(0.0);
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

void zero_grads(std::span<Var> params) {
  for (Var& p : params) p.grad_buffer().fill(0.0);
}

}  // namespace sign::nn
