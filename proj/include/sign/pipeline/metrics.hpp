#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace sign::pipeline {

struct EvalMetrics {
  std::size_t count = 0;
  double mse = 0.0;
  std::optional<double> pearson;  // absent when targets are constant and that was allowed
  double baseline_mse = 0.0;      // predicting baseline_mean for every record
  double baseline_mean = 0.0;
};

[[nodiscard]] double mean_squared_error(std::span<const double> predictions, std::span<const double> targets);

// Throws ConstantVector when either input has zero variance.
[[nodiscard]] double pearson(std::span<const double> a, std::span<const double> b);

// MSE, Pearson r and the predict-a-constant baseline. Throws ConstantTargets
// when the targets have zero variance unless allow_constant_targets is set;
// then pearson is left empty. Constant predictions give r = 0.
[[nodiscard]] EvalMetrics evaluate_predictions(std::span<const double> predictions, std::span<const double> targets,
                                               double baseline_mean, bool allow_constant_targets = false);

// Pearson correlation between a predicted and a true gaze pattern. Throws
// ConstantVector when the true pattern is constant. A constant prediction
// carries no ordering information and scores 0.
[[nodiscard]] double recovery_score(std::span<const double> predicted, std::span<const double> truth);

}  // namespace sign::pipeline
