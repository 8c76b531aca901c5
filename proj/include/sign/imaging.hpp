#pragma once

// Images, netpbm IO, resampling, blur, patch tiling, and weight-map rendering.
//
// Two sample types are used: 8-bit images for files and rendering, and
// double images with values in [0, 1] for model inputs and filters.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sign/error.hpp"

namespace sign::imaging {

template <typename T>
class BasicImage {
 public:
  BasicImage() = default;
  BasicImage(std::size_t height, std::size_t width, std::size_t channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        pixels_(height * width * channels, fill) {
    validate_shape();
  }
  BasicImage(std::size_t height, std::size_t width, std::size_t channels, std::vector<T> pixels)
      : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
    validate_shape();
    if (pixels_.size() != height_ * width_ * channels_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "pixel buffer has " + std::to_string(pixels_.size()) + " samples, expected " +
                      std::to_string(height_ * width_ * channels_));
    }
  }

  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
  [[nodiscard]] bool empty() const noexcept { return pixels_.empty(); }

  [[nodiscard]] T& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels_[(y * width_ + x) * channels_ + c];
  }
  [[nodiscard]] const T& at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels_[(y * width_ + x) * channels_ + c];
  }
  [[nodiscard]] std::span<T> pixels() noexcept { return pixels_; }
  [[nodiscard]] std::span<const T> pixels() const noexcept { return pixels_; }

  friend bool operator==(const BasicImage&, const BasicImage&) = default;

 private:
  void validate_shape() const {
    if (channels_ != 1 && channels_ != 3) {
      throw Error(ErrorCode::InvalidArgument,
                  "images have 1 or 3 channels, got " + std::to_string(channels_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 1;
  std::vector<T> pixels_;
};

using Image = BasicImage<std::uint8_t>;
using ImageF = BasicImage<double>;

// --- netpbm -------------------------------------------------------------------

enum class NetpbmEncoding { Plain, Binary };

// Reads P2/P3/P5/P6 with maxval 255; '#' comments are allowed anywhere in the header.
[[nodiscard]] Image load_image(const std::filesystem::path& path);
[[nodiscard]] Image decode_netpbm(std::span<const std::uint8_t> bytes);
// 1 channel -> PGM, 3 channels -> PPM.
void save_image(const std::filesystem::path& path, const Image& image,
                NetpbmEncoding encoding = NetpbmEncoding::Binary);
[[nodiscard]] std::vector<std::uint8_t> encode_netpbm(const Image& image,
                                                      NetpbmEncoding encoding = NetpbmEncoding::Binary);

// --- conversions ---------------------------------------------------------------

[[nodiscard]] ImageF to_float(const Image& image);
// Scales by 255, rounds to nearest, clamps.
[[nodiscard]] Image to_bytes(const ImageF& image);
// Luminance (0.299, 0.587, 0.114) for RGB -> gray; gray -> RGB replicates.
[[nodiscard]] ImageF convert_channels(const ImageF& image, std::size_t channels);

// --- filters -------------------------------------------------------------------

// Bilinear with corner-aligned sampling: output index i maps to input
// coordinate i*(in-1)/(out-1), and to the centre (in-1)/2 when out == 1.
// The 8-bit overload floors the interpolated value (after a 1e-7 nudge).
[[nodiscard]] ImageF resize(const ImageF& image, std::size_t out_height, std::size_t out_width);
[[nodiscard]] Image resize(const Image& image, std::size_t out_height, std::size_t out_width);

// Separable normalized Gaussian of radius ceil(3 sigma) with clamped edges;
// sigma == 0 returns the input. The 8-bit overload rounds to nearest.
[[nodiscard]] ImageF gaussian_blur(const ImageF& image, double sigma);
[[nodiscard]] Image gaussian_blur(const Image& image, double sigma);

struct GistInput {
  ImageF image;
  std::optional<ImageF> context;
};

// Blur, then resize to gist_size x gist_size; the context gets the same treatment.
[[nodiscard]] GistInput make_gist_input(const ImageF& image, const std::optional<ImageF>& context,
                                        std::size_t gist_size, double sigma);

// --- patches -------------------------------------------------------------------

template <typename T>
struct PatchGrid {
  std::size_t patch_size = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t channels = 1;
  // Row-major region order; each patch is patch_size x patch_size x channels, HWC.
  std::vector<std::vector<T>> patches;

  [[nodiscard]] std::size_t size() const noexcept { return patches.size(); }
};

template <typename T>
[[nodiscard]] PatchGrid<T> patchify(const BasicImage<T>& image, std::size_t patch_size);
template <typename T>
[[nodiscard]] BasicImage<T> unpatchify(const PatchGrid<T>& grid);

// --- heatmaps ------------------------------------------------------------------

// Min-max normalized weights (uniform weights map to 0.5), nearest-upsampled to
// the target size and optionally blurred. Values in [0, 1]; higher = more weight.
[[nodiscard]] ImageF weight_intensity(std::span<const double> weights, std::size_t grid_rows,
                                      std::size_t grid_cols, std::size_t target_height,
                                      std::size_t target_width, double blur_sigma = 0.0);

// RGB rendering through an 8-entry viridis-like ramp whose luminance increases
// monotonically; blended at alpha 0.5 over base when given (base must have the
// target size).
[[nodiscard]] Image render_heatmap(std::span<const double> weights, std::size_t grid_rows,
                                   std::size_t grid_cols, std::size_t target_height,
                                   std::size_t target_width, double blur_sigma,
                                   const std::optional<Image>& base = std::nullopt);

// Maps an intensity in [0, 1] through the ramp.
[[nodiscard]] std::array<std::uint8_t, 3> heat_color(double intensity);

}  // namespace sign::imaging
