#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "sign/nn/autodiff.hpp"

namespace sign::nn {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so gradients that are zero in
  // both computations compare as equal.
  double floor = 1e-6;
  // When nonzero, only this many evenly spaced elements of each input are probed.
  std::size_t max_elements = 0;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t elements_checked = 0;
  // Probes where a relu or abs input changed sign within one step, so the
  // central difference spans a kink and cannot confirm the analytic gradient.
  std::size_t kinks = 0;
  std::string worst;  // "input i, element k: analytic a vs numeric n"

  [[nodiscard]] bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

// Compares gradients of loss() with respect to each input against central
// differences. loss must rebuild the graph from the inputs' current values and
// return a scalar. Input values are restored before returning.
GradcheckResult gradcheck(const std::function<Var()>& loss, std::span<Var> inputs,
                          const GradcheckOptions& options = {});

}  // namespace sign::nn
