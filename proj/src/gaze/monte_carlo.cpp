#include <algorithm>
#include <cmath>

#include "gaze_internal.hpp"
#include "sign/error.hpp"
#include "sign/gaze.hpp"

namespace sign::gaze {

MonteCarloEstimate monte_carlo_log_gaze(const GazeField& field, const TransitionKernel& kernel,
                                        const DurationModel& durations, std::size_t max_length,
                                        std::size_t n_samples, std::uint64_t seed,
                                        double gist_log_duration) {
  detail::require_same_size(field, kernel);
  if (n_samples == 0) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  const std::vector<double> mu = durations.local_durations(field);
  std::mt19937_64 rng(seed);

  // Welford accumulation keeps the variance stable for large n.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const ScanPath path = sample_scanpath(kernel, max_length, rng);
    double value = gist_log_duration;
    for (RegionIndex j : path.fixations) value += mu[j];
    const double delta = value - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (value - mean);
  }
  MonteCarloEstimate est;
  est.mean = mean;
  if (n_samples > 1) {
    const double variance = m2 / static_cast<double>(n_samples - 1);
    est.std_error = std::sqrt(std::max(variance, 0.0) / static_cast<double>(n_samples));
  }
  return est;
}

MonteCarloWeights monte_carlo_weights(const GazeField& field, const TransitionKernel& kernel,
                                      std::size_t max_length, std::size_t n_samples,
                                      std::uint64_t seed) {
  detail::require_same_size(field, kernel);
  if (n_samples == 0) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<double> counts(kernel.size(), 0.0);
  std::vector<char> seen(kernel.size());
  for (std::size_t s = 0; s < n_samples; ++s) {
    const ScanPath path = sample_scanpath(kernel, max_length, rng);
    std::fill(seen.begin(), seen.end(), 0);
    for (RegionIndex j : path.fixations) {
      if (!seen[j]) counts[j] += 1.0;
      seen[j] = 1;
    }
  }
  MonteCarloWeights out;
  const double n = static_cast<double>(n_samples);
  for (double& c : counts) {
    c /= n;
    out.max_std_error = std::max(out.max_std_error, std::sqrt(c * (1.0 - c) / n));
  }
  out.map = WeightMap::from_weights(std::move(counts));
  return out;
}

double sample_log_gaze(const GazeField& field, const TransitionKernel& kernel,
                       const DurationModel& durations, std::size_t max_length,
                       double gist_log_duration, std::mt19937_64& rng) {
  detail::require_same_size(field, kernel);
  const ScanPath path = sample_scanpath(kernel, max_length, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  double total = gist_log_duration;
  for (RegionIndex j : path.fixations) {
    total += durations.mu(field.features(j));
    if (durations.noise_sigma > 0.0) total += durations.noise_sigma * noise(rng);
  }
  return total;
}

}  // namespace sign::gaze
