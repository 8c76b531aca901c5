#pragma once

// Seeded random scan-path instances shared by the unit and acceptance suites.

#include <cstdint>
#include <random>
#include <vector>

#include "sign/gaze.hpp"

namespace sign::testing {

struct RandomInstance {
  gaze::GazeField field;
  gaze::TransitionKernel kernel;
  gaze::DurationModel durations;
  std::size_t max_length;
  double gist;
};

// Regions carry a single feature that is their own log-duration, so mu reads it back.
inline gaze::DurationModel feature_duration_model() {
  gaze::DurationModel d;
  d.mu = [](std::span<const double> s) { return s[0]; };
  d.mu0 = [](std::span<const double> g, std::span<const double>) { return g.empty() ? 0.0 : g[0]; };
  return d;
}

inline RandomInstance random_instance(std::uint64_t seed, std::size_t max_n = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_n(1, max_n);
  const std::size_t n = pick_n(rng);
  std::uniform_int_distribution<std::size_t> pick_t(1, n);
  const std::size_t t = pick_t(rng);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::uniform_real_distribution<double> dur(-1.0, 1.5);

  std::vector<double> affinity(n * n);
  for (double& a : affinity) a = unit(rng);
  std::vector<double> initial(n);
  double total = 0.0;
  for (double& p : initial) total += (p = unit(rng));
  for (double& p : initial) p /= total;
  std::vector<double> features(n);
  for (double& f : features) f = dur(rng);

  // Split a 1xN or 2xN/2 grid depending on parity.
  const std::size_t rows = (n % 2 == 0 && n > 2) ? 2 : 1;
  return RandomInstance{gaze::GazeField(rows, n / rows, 1, std::move(features)),
                        gaze::TransitionKernel(n, std::move(affinity), std::move(initial)),
                        feature_duration_model(), t, dur(rng)};
}

}  // namespace sign::testing
