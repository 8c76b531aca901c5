#include "sign/pipeline/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sign/error.hpp"

namespace sign::pipeline {
namespace {

void require_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.size()) + " values paired with " + std::to_string(b.size()));
  }
  if (a.empty()) throw Error(ErrorCode::EmptyBatch, "no values to compare");
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double centred_sum_squares(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

}  // namespace

double mean_squared_error(std::span<const double> predictions, std::span<const double> targets) {
  require_pair(predictions, targets);
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = predictions[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(targets.size());
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_pair(a, b);
  const double ma = mean(a), mb = mean(b);
  const double sa = centred_sum_squares(a, ma), sb = centred_sum_squares(b, mb);
  if (sa == 0.0 || sb == 0.0) throw Error(ErrorCode::ConstantVector, "correlation of a constant vector");
  double cross = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cross += (a[i] - ma) * (b[i] - mb);
  return std::clamp(cross / std::sqrt(sa * sb), -1.0, 1.0);
}

EvalMetrics evaluate_predictions(std::span<const double> predictions, std::span<const double> targets,
                                 double baseline_mean, bool allow_constant_targets) {
  EvalMetrics m;
  m.mse = mean_squared_error(predictions, targets);
  m.count = targets.size();
  m.baseline_mean = baseline_mean;
  double base = 0.0;
  for (double t : targets) base += (t - baseline_mean) * (t - baseline_mean);
  m.baseline_mse = base / static_cast<double>(targets.size());

  if (centred_sum_squares(targets, mean(targets)) == 0.0) {
    if (!allow_constant_targets) {
      throw Error(ErrorCode::ConstantTargets, "targets are constant, so the correlation is undefined");
    }
    return m;
  }
  m.pearson = centred_sum_squares(predictions, mean(predictions)) == 0.0 ? 0.0 : pearson(predictions, targets);
  return m;
}

double recovery_score(std::span<const double> predicted, std::span<const double> truth) {
  require_pair(predicted, truth);
  if (centred_sum_squares(truth, mean(truth)) == 0.0) {
    throw Error(ErrorCode::ConstantVector, "true pattern is constant; recovery is undefined");
  }
  if (centred_sum_squares(predicted, mean(predicted)) == 0.0) return 0.0;
  return pearson(predicted, truth);
}

}  // namespace sign::pipeline
