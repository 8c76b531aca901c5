#include <algorithm>
#include <cmath>
#include <string>

#include "gaze_internal.hpp"
#include "sign/error.hpp"
#include "sign/gaze.hpp"

namespace sign::gaze {
namespace {

struct Enumerator {
  const TransitionKernel& kernel;
  std::size_t length;
  std::vector<ScanPath>& out;
  std::vector<RegionIndex> history;

  void extend(double prefix_prob) {
    if (history.size() == length) {
      out.push_back({history, prefix_prob});
      return;
    }
    std::vector<double> probs;
    if (!detail::next_distribution(kernel, history, probs)) {
      out.push_back({history, prefix_prob});
      return;
    }
    std::vector<bool> visited(kernel.size(), false);
    for (RegionIndex v : history) visited[v] = true;
    for (RegionIndex j = 0; j < kernel.size(); ++j) {
      if (visited[j]) continue;
      history.push_back(j);
      extend(prefix_prob * probs[j]);
      history.pop_back();
    }
  }
};

void check_enumerable(const GazeField& field, const TransitionKernel& kernel,
                      std::size_t max_length, const EnumerationOptions& options) {
  detail::require_same_size(field, kernel);
  if (max_length == 0) throw Error(ErrorCode::InvalidArgument, "path length must be >= 1");
  if (!kernel.infinite_ior()) {
    throw Error(ErrorCode::InvalidArgument,
                "enumeration needs infinite IoR; finite horizons are sampling-only");
  }
  const std::size_t length = effective_length(kernel.size(), max_length);
  const std::uint64_t count = ordered_path_count(kernel.size(), length);
  if (count > options.max_paths) {
    throw Error(ErrorCode::ExplosionGuard,
                std::to_string(count) + " ordered paths for N=" + std::to_string(kernel.size()) +
                    ", L=" + std::to_string(length) + " exceed the cap of " +
                    std::to_string(options.max_paths));
  }
}

}  // namespace

std::vector<ScanPath> enumerate_scanpaths(const GazeField& field, const TransitionKernel& kernel,
                                          std::size_t max_length, EnumerationOptions options) {
  check_enumerable(field, kernel, max_length, options);
  const std::size_t length = effective_length(kernel.size(), max_length);
  std::vector<ScanPath> paths;
  paths.reserve(static_cast<std::size_t>(ordered_path_count(kernel.size(), length)));
  Enumerator e{kernel, length, paths, {}};
  e.history.reserve(length);
  for (RegionIndex first = 0; first < kernel.size(); ++first) {
    e.history.assign(1, first);
    e.extend(kernel.initial()[first]);
  }
  return paths;
}

double expected_log_gaze_pathsum(const GazeField& field, const TransitionKernel& kernel,
                                 const DurationModel& durations, std::size_t max_length,
                                 double gist_log_duration, EnumerationOptions options) {
  const std::vector<ScanPath> paths = enumerate_scanpaths(field, kernel, max_length, options);
  const std::vector<double> mu = durations.local_durations(field);
  double local = 0.0;
  for (const ScanPath& path : paths) {
    double along = 0.0;
    for (RegionIndex j : path.fixations) along += mu[j];
    local += path.prob * along;
  }
  return gist_log_duration + local;
}

WeightMap enumerate_weights(const GazeField& field, const TransitionKernel& kernel,
                            std::size_t max_length, EnumerationOptions options) {
  const std::vector<ScanPath> paths = enumerate_scanpaths(field, kernel, max_length, options);
  std::vector<double> weights(kernel.size(), 0.0);
  for (const ScanPath& path : paths) {
    for (RegionIndex j : path.fixations) weights[j] += path.prob;
  }
  // Rounding can push a saturated weight a few ulps past 1.
  for (double& w : weights) w = std::min(w, 1.0);
  return WeightMap::from_weights(std::move(weights));
}

double expected_log_gaze_weighted(const GazeField& field, const DurationModel& durations,
                                  const WeightMap& weights, double gist_log_duration) {
  if (weights.weights.size() != field.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "weight map has " + std::to_string(weights.weights.size()) +
                    " entries, field has " + std::to_string(field.size()) + " regions");
  }
  const std::vector<double> mu = durations.local_durations(field);
  double local = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) local += mu[j] * weights.weights[j];
  return gist_log_duration + local;
}

}  // namespace sign::gaze
