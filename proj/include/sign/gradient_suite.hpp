#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sign::model {

struct GradientCase {
  std::string name;
  std::uint64_t seed = 0;
  double max_relative_error = 0.0;
  std::size_t elements_checked = 0;
  std::string worst;
  std::size_t attempts = 0;  // evaluation points drawn before one was kink-free
  std::size_t kinks = 0;     // kinks left at the final point; nonzero means the case failed
};

struct GradientSuiteResult {
  std::vector<GradientCase> cases;
  double tolerance = 1e-4;

  [[nodiscard]] bool passed() const;
};

// Finite-difference check (central, step 1e-5) of every layer type and of
// the full forward-loss pass, once per seed. Biases and LayerNorm offsets are
// drawn from U(-0.1, 0.1), and redrawn (up to 8 times) while any probe lands
// within one step of a ReLU kink. Only forward values decide whether a point
// is kink-free.
[[nodiscard]] GradientSuiteResult run_gradient_suite(std::span<const std::uint64_t> seeds);

}  // namespace sign::model
