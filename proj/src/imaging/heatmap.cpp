#include <algorithm>
#include <cmath>

#include "sign/imaging.hpp"

namespace sign::imaging {

namespace {

// Luminance of these entries rises monotonically (about 31 -> 217).
constexpr std::array<std::array<double, 3>, 8> kRamp{{
    {68, 1, 84},
    {70, 50, 127},
    {54, 92, 141},
    {39, 127, 142},
    {31, 161, 135},
    {74, 194, 109},
    {159, 218, 58},
    {253, 231, 37},
}};

}  // namespace

std::array<std::uint8_t, 3> heat_color(double intensity) {
  const double pos = std::clamp(intensity, 0.0, 1.0) * static_cast<double>(kRamp.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), kRamp.size() - 2);
  const double t = pos - static_cast<double>(lo);
  std::array<std::uint8_t, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double v = kRamp[lo][c] + t * (kRamp[lo + 1][c] - kRamp[lo][c]);
    rgb[c] = static_cast<std::uint8_t>(std::lround(v));
  }
  return rgb;
}

ImageF weight_intensity(std::span<const double> weights, std::size_t grid_rows,
                        std::size_t grid_cols, std::size_t target_height, std::size_t target_width,
                        double blur_sigma) {
  if (weights.size() != grid_rows * grid_cols || weights.empty()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(weights.size()) + " weights for a " + std::to_string(grid_rows) +
                    "x" + std::to_string(grid_cols) + " grid");
  }
  if (target_height == 0 || target_width == 0) {
    throw Error(ErrorCode::InvalidArgument, "heatmap target must be at least 1x1");
  }
  const auto [lo_it, hi_it] = std::minmax_element(weights.begin(), weights.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  ImageF out(target_height, target_width, 1);
  for (std::size_t y = 0; y < target_height; ++y) {
    const std::size_t r = y * grid_rows / target_height;
    for (std::size_t x = 0; x < target_width; ++x) {
      const std::size_t c = x * grid_cols / target_width;
      out.at(y, x) = span > 0.0 ? (weights[r * grid_cols + c] - lo) / span : 0.5;
    }
  }
  return blur_sigma > 0.0 ? gaussian_blur(out, blur_sigma) : out;
}

Image render_heatmap(std::span<const double> weights, std::size_t grid_rows, std::size_t grid_cols,
                     std::size_t target_height, std::size_t target_width, double blur_sigma,
                     const std::optional<Image>& base) {
  if (base && (base->height() != target_height || base->width() != target_width)) {
    throw Error(ErrorCode::DimensionMismatch, "base image does not match the heatmap size");
  }
  const ImageF intensity =
      weight_intensity(weights, grid_rows, grid_cols, target_height, target_width, blur_sigma);
  Image out(target_height, target_width, 3);
  for (std::size_t y = 0; y < target_height; ++y) {
    for (std::size_t x = 0; x < target_width; ++x) {
      const auto rgb = heat_color(intensity.at(y, x));
      for (std::size_t c = 0; c < 3; ++c) {
        if (!base) {
          out.at(y, x, c) = rgb[c];
          continue;
        }
        const double under = base->at(y, x, base->channels() == 3 ? c : 0);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(0.5 * under + 0.5 * rgb[c]));
      }
    }
  }
  return out;
}

}  // namespace sign::imaging
