#pragma once

// Scan-path model over image regions.
//
// A scan-path is a sequence of region fixations drawn from a first-order
// transition kernel with inhibition of return (IoR): regions fixated within
// the IoR horizon get zero probability and the remaining affinities are
// renormalized. The expected log gaze of an image is the gist duration plus
// the expected sum of local log-durations along the path, which can be
// computed either path by path or through per-region weights
// w_j = P(region j is visited). Both routes are exposed so they can check
// each other.
//
// Region indices are 0-based and row-major over the region grid.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace sign::gaze {

using RegionIndex = std::size_t;

class GazeField {
 public:
  GazeField(std::size_t rows, std::size_t cols, std::size_t feature_dim,
            std::vector<double> features);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return rows_ * cols_; }
  [[nodiscard]] std::size_t feature_dim() const noexcept { return feature_dim_; }
  [[nodiscard]] std::span<const double> features(RegionIndex j) const;
  [[nodiscard]] RegionIndex region_at(std::size_t row, std::size_t col) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::size_t feature_dim_;
  std::vector<double> features_;
};

class TransitionKernel {
 public:
  // affinity is N x N row-major; ior_horizon = nullopt means infinite IoR.
  TransitionKernel(std::size_t n, std::vector<double> affinity, std::vector<double> initial,
                   std::optional<std::size_t> ior_horizon = std::nullopt);

  static TransitionKernel uniform(std::size_t n,
                                  std::optional<std::size_t> ior_horizon = std::nullopt);

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] double affinity(RegionIndex from, RegionIndex to) const {
    return affinity_[from * n_ + to];
  }
  [[nodiscard]] std::span<const double> initial() const noexcept { return initial_; }
  [[nodiscard]] std::optional<std::size_t> ior_horizon() const noexcept { return horizon_; }
  [[nodiscard]] bool infinite_ior() const noexcept { return !horizon_.has_value(); }

 private:
  std::size_t n_;
  std::vector<double> affinity_;
  std::vector<double> initial_;
  std::optional<std::size_t> horizon_;
};

struct ScanPath {
  std::vector<RegionIndex> fixations;
  double prob = 0.0;
};

// Log-durations are in log-seconds.
struct DurationModel {
  std::function<double(std::span<const double> gist, std::span<const double> context_gist)> mu0;
  std::function<double(std::span<const double> region_features)> mu;
  // Standard deviation of the additive Gaussian noise on each sampled log-duration.
  double noise_sigma = 0.0;

  [[nodiscard]] std::vector<double> local_durations(const GazeField& field) const;
};

struct WeightMap {
  std::vector<double> weights;
  std::vector<double> pattern;

  // pattern[j] = weights[j] / sum(weights); all-zero weights give an all-zero pattern.
  static WeightMap from_weights(std::vector<double> weights);
};

struct EnumerationOptions {
  std::uint64_t max_paths = 10'000'000;
};

// N! / (N - L)!, saturating at UINT64_MAX.
[[nodiscard]] std::uint64_t ordered_path_count(std::size_t n, std::size_t length) noexcept;

// Effective path length under infinite IoR: min(T, N).
[[nodiscard]] std::size_t effective_length(std::size_t n, std::size_t max_length) noexcept;

// Next-fixation distribution. current is appended to visited; with a finite
// horizon h only the last h entries of that history are masked.
// Throws Error(AllMasked) when no unmasked region has positive affinity.
[[nodiscard]] std::vector<double> step_distribution(const TransitionKernel& kernel,
                                                    std::span<const RegionIndex> visited,
                                                    RegionIndex current);

// All ordered IoR paths of length min(T, N) with their probabilities.
// A prefix that reaches an all-masked state ends there and is emitted with
// its prefix probability. Requires infinite IoR.
[[nodiscard]] std::vector<ScanPath> enumerate_scanpaths(const GazeField& field,
                                                        const TransitionKernel& kernel,
                                                        std::size_t max_length,
                                                        EnumerationOptions options = {});

// gist + sum over paths of P(path) * sum of mu over the path's regions.
[[nodiscard]] double expected_log_gaze_pathsum(const GazeField& field,
                                               const TransitionKernel& kernel,
                                               const DurationModel& durations,
                                               std::size_t max_length, double gist_log_duration,
                                               EnumerationOptions options = {});

// w_j = total probability of the paths containing region j.
[[nodiscard]] WeightMap enumerate_weights(const GazeField& field, const TransitionKernel& kernel,
                                          std::size_t max_length, EnumerationOptions options = {});

// gist + sum_j mu(S_j) * w_j
[[nodiscard]] double expected_log_gaze_weighted(const GazeField& field,
                                                const DurationModel& durations,
                                                const WeightMap& weights,
                                                double gist_log_duration);

// Draws one path from rng. Path length is min(T, N) under infinite IoR and T
// under a finite horizon; an all-masked step truncates the path.
[[nodiscard]] ScanPath sample_scanpath(const TransitionKernel& kernel, std::size_t max_length,
                                       std::mt19937_64& rng);
[[nodiscard]] ScanPath sample_scanpath(const GazeField& field, const TransitionKernel& kernel,
                                       std::size_t max_length, std::uint64_t seed);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean of gist + sum of mu over sampled paths (noise-free durations).
[[nodiscard]] MonteCarloEstimate monte_carlo_log_gaze(const GazeField& field,
                                                      const TransitionKernel& kernel,
                                                      const DurationModel& durations,
                                                      std::size_t max_length,
                                                      std::size_t n_samples, std::uint64_t seed,
                                                      double gist_log_duration);

struct MonteCarloWeights {
  WeightMap map;
  // Largest binomial standard error over the regions.
  double max_std_error = 0.0;
};

// Visit frequencies over n sampled paths; the fallback when enumeration is too large.
[[nodiscard]] MonteCarloWeights monte_carlo_weights(const GazeField& field,
                                                    const TransitionKernel& kernel,
                                                    std::size_t max_length,
                                                    std::size_t n_samples, std::uint64_t seed);

// One full draw of the generative process: a path plus noisy log-durations
// g_t ~ Normal(mu(S_{F_t}), noise_sigma). Returns gist + sum_t g_t.
[[nodiscard]] double sample_log_gaze(const GazeField& field, const TransitionKernel& kernel,
                                     const DurationModel& durations, std::size_t max_length,
                                     double gist_log_duration, std::mt19937_64& rng);

// Aggregate gaze time in seconds from expected log gaze: exp(E g).
[[nodiscard]] double gaze_seconds(double expected_log_gaze) noexcept;

}  // namespace sign::gaze
