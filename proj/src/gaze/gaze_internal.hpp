#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "sign/error.hpp"
#include "sign/gaze.hpp"

namespace sign::gaze::detail {

// 53-bit uniform in [0, 1); independent of the standard library's distribution code.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void require_same_size(const GazeField& field, const TransitionKernel& kernel) {
  if (field.size() != kernel.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "field has " + std::to_string(field.size()) + " regions, kernel has " +
                    std::to_string(kernel.size()));
  }
}

// history ends with the current region. Returns false when everything is masked.
bool next_distribution(const TransitionKernel& kernel, std::span<const RegionIndex> history,
                       std::vector<double>& out);

RegionIndex draw_categorical(std::span<const double> probs, std::mt19937_64& rng);

}  // namespace sign::gaze::detail
