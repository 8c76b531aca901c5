#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gaze_internal.hpp"
#include "sign/error.hpp"
#include "sign/gaze.hpp"

namespace sign::gaze {

GazeField::GazeField(std::size_t rows, std::size_t cols, std::size_t feature_dim,
                     std::vector<double> features)
    : rows_(rows), cols_(cols), feature_dim_(feature_dim), features_(std::move(features)) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::InvalidArgument, "gaze field needs at least one region");
  }
  if (features_.size() != rows * cols * feature_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature buffer has " + std::to_string(features_.size()) + " values, expected " +
                    std::to_string(rows * cols * feature_dim));
  }
}

std::span<const double> GazeField::features(RegionIndex j) const {
  if (j >= size()) throw Error(ErrorCode::InvalidArgument, "region index out of range");
  return std::span<const double>(features_).subspan(j * feature_dim_, feature_dim_);
}

RegionIndex GazeField::region_at(std::size_t row, std::size_t col) const {
  if (row >= rows_ || col >= cols_) throw Error(ErrorCode::InvalidArgument, "cell out of range");
  return row * cols_ + col;
}

TransitionKernel::TransitionKernel(std::size_t n, std::vector<double> affinity,
                                   std::vector<double> initial,
                                   std::optional<std::size_t> ior_horizon)
    : n_(n), affinity_(std::move(affinity)), initial_(std::move(initial)), horizon_(ior_horizon) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "kernel needs at least one region");
  if (affinity_.size() != n * n || initial_.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "kernel buffers do not match N=" + std::to_string(n));
  }
  if (horizon_ && *horizon_ == 0) {
    throw Error(ErrorCode::InvalidArgument, "IoR horizon must be at least 1");
  }
  for (double a : affinity_) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw Error(ErrorCode::InvalidArgument, "affinities must be finite and non-negative");
    }
  }
  double total = 0.0;
  for (double p : initial_) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "initial distribution is negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument,
                "initial distribution sums to " + std::to_string(total) + ", not 1");
  }
}

TransitionKernel TransitionKernel::uniform(std::size_t n, std::optional<std::size_t> ior_horizon) {
  return TransitionKernel(n, std::vector<double>(n * n, 1.0),
                          std::vector<double>(n, 1.0 / static_cast<double>(n)), ior_horizon);
}

std::vector<double> DurationModel::local_durations(const GazeField& field) const {
  if (!mu) throw Error(ErrorCode::InvalidArgument, "duration model has no local function");
  std::vector<double> out(field.size());
  for (RegionIndex j = 0; j < field.size(); ++j) out[j] = mu(field.features(j));
  return out;
}

WeightMap WeightMap::from_weights(std::vector<double> weights) {
  WeightMap map;
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  map.pattern.assign(weights.size(), 0.0);
  if (total > 0.0) {
    for (std::size_t j = 0; j < weights.size(); ++j) map.pattern[j] = weights[j] / total;
  }
  map.weights = std::move(weights);
  return map;
}

std::uint64_t ordered_path_count(std::size_t n, std::size_t length) noexcept {
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < length && i < n; ++i) {
    const std::uint64_t factor = n - i;
    if (count > std::numeric_limits<std::uint64_t>::max() / factor) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    count *= factor;
  }
  return count;
}

std::size_t effective_length(std::size_t n, std::size_t max_length) noexcept {
  return std::min(n, max_length);
}

namespace detail {

bool next_distribution(const TransitionKernel& kernel, std::span<const RegionIndex> history,
                       std::vector<double>& out) {
  const std::size_t n = kernel.size();
  const RegionIndex current = history.back();
  out.resize(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = kernel.affinity(current, j);
  std::size_t masked = history.size();
  if (const auto h = kernel.ior_horizon()) masked = std::min(masked, *h);
  for (std::size_t i = history.size() - masked; i < history.size(); ++i) out[history[i]] = 0.0;
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  if (!(total > 0.0)) return false;
  for (double& p : out) p /= total;
  return true;
}

RegionIndex draw_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  RegionIndex last_positive = 0;
  for (RegionIndex j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    last_positive = j;
    cumulative += probs[j];
    if (u < cumulative) return j;
  }
  return last_positive;
}

}  // namespace detail

std::vector<double> step_distribution(const TransitionKernel& kernel,
                                      std::span<const RegionIndex> visited, RegionIndex current) {
  if (current >= kernel.size()) throw Error(ErrorCode::InvalidArgument, "current region out of range");
  std::vector<RegionIndex> history(visited.begin(), visited.end());
  for (RegionIndex v : history) {
    if (v >= kernel.size()) throw Error(ErrorCode::InvalidArgument, "visited region out of range");
  }
  history.push_back(current);
  std::vector<double> out;
  if (!detail::next_distribution(kernel, history, out)) {
    throw Error(ErrorCode::AllMasked,
                "every candidate region is masked from region " + std::to_string(current));
  }
  return out;
}

ScanPath sample_scanpath(const TransitionKernel& kernel, std::size_t max_length,
                         std::mt19937_64& rng) {
  if (max_length == 0) throw Error(ErrorCode::InvalidArgument, "path length must be >= 1");
  const std::size_t length =
      kernel.infinite_ior() ? effective_length(kernel.size(), max_length) : max_length;
  ScanPath path;
  path.fixations.reserve(length);
  const RegionIndex first = detail::draw_categorical(kernel.initial(), rng);
  path.fixations.push_back(first);
  path.prob = kernel.initial()[first];
  std::vector<double> probs;
  while (path.fixations.size() < length) {
    if (!detail::next_distribution(kernel, path.fixations, probs)) break;
    const RegionIndex next = detail::draw_categorical(probs, rng);
    path.prob *= probs[next];
    path.fixations.push_back(next);
  }
  return path;
}

ScanPath sample_scanpath(const GazeField& field, const TransitionKernel& kernel,
                         std::size_t max_length, std::uint64_t seed) {
  detail::require_same_size(field, kernel);
  std::mt19937_64 rng(seed);
  return sample_scanpath(kernel, max_length, rng);
}

double gaze_seconds(double expected_log_gaze) noexcept { return std::exp(expected_log_gaze); }

}  // namespace sign::gaze
