#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sign/nn/autodiff.hpp"

namespace sign::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment estimates for one parameter list; the order of params passed to
// adam_step must match the order given at construction.
struct AdamState {
  AdamState() = default;
  AdamState(std::span<const Var> params, AdamOptions options);

  AdamOptions options;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

// Bias-corrected Adam update of every parameter's value using the supplied
// gradients. Throws Error(ShapeMismatch) when counts or shapes disagree.
void adam_step(AdamState& state, std::span<Var> params, std::span<const Tensor> grads);
// Same, reading each parameter's accumulated gradient.
void adam_step(AdamState& state, std::span<Var> params);

// lr0 halved every 5 epochs.
[[nodiscard]] double lr_schedule(std::size_t epoch, double lr0) noexcept;

}  // namespace sign::nn
