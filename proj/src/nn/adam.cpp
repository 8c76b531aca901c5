#include "sign/nn/adam.hpp"

#include <cmath>
#include <string>

#include "sign/error.hpp"

namespace sign::nn {

AdamState::AdamState(std::span<const Var> params, AdamOptions opts) : options(opts) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Var& p : params) {
    m.emplace_back(p.shape());
    v.emplace_back(p.shape());
  }
}

void adam_step(AdamState& state, std::span<Var> params, std::span<const Tensor> grads) {
  if (params.size() != state.m.size() || grads.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "adam_step got " + std::to_string(params.size()) + " parameters and " +
                                              std::to_string(grads.size()) + " gradients for a state of " +
                                              std::to_string(state.m.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& ps = params[i].shape();
    if (grads[i].shape() != ps || state.m[i].shape() != ps) {
      throw Error(ErrorCode::ShapeMismatch, "adam_step parameter " + std::to_string(i) + " has shape " +
                                                shape_string(ps) + " but gradient " +
                                                shape_string(grads[i].shape()));
    }
  }

  const AdamOptions& o = state.options;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i].mutable_value();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      value[k] -= o.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + o.eps);
    }
  }
}

void adam_step(AdamState& state, std::span<Var> params) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Var& p : params) grads.push_back(p.grad_buffer());
  adam_step(state, params, grads);
}

double lr_schedule(std::size_t epoch, double lr0) noexcept {
  return std::ldexp(lr0, -static_cast<int>(epoch / 5));
}

}  // namespace sign::nn
