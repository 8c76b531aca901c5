#include <algorithm>
#include <cmath>

#include "sign/imaging.hpp"

namespace sign::imaging {

template <typename T>
PatchGrid<T> patchify(const BasicImage<T>& image, std::size_t patch_size) {
  if (patch_size == 0 || image.height() % patch_size != 0 || image.width() % patch_size != 0) {
    throw Error(ErrorCode::IndivisibleDims,
                std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is not divisible by patch size " + std::to_string(patch_size));
  }
  PatchGrid<T> grid;
  grid.patch_size = patch_size;
  grid.grid_rows = image.height() / patch_size;
  grid.grid_cols = image.width() / patch_size;
  grid.channels = image.channels();
  const std::size_t row_len = patch_size * grid.channels;
  grid.patches.reserve(grid.grid_rows * grid.grid_cols);
  for (std::size_t gr = 0; gr < grid.grid_rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.grid_cols; ++gc) {
      std::vector<T> patch(patch_size * row_len);
      for (std::size_t y = 0; y < patch_size; ++y) {
        const T* src = &image.at(gr * patch_size + y, gc * patch_size);
        std::copy_n(src, row_len, patch.begin() + static_cast<std::ptrdiff_t>(y * row_len));
      }
      grid.patches.push_back(std::move(patch));
    }
  }
  return grid;
}

template <typename T>
BasicImage<T> unpatchify(const PatchGrid<T>& grid) {
  if (grid.patches.size() != grid.grid_rows * grid.grid_cols) {
    throw Error(ErrorCode::DimensionMismatch, "patch count does not match the grid");
  }
  const std::size_t p = grid.patch_size;
  BasicImage<T> image(grid.grid_rows * p, grid.grid_cols * p, grid.channels);
  const std::size_t row_len = p * grid.channels;
  for (std::size_t gr = 0; gr < grid.grid_rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.grid_cols; ++gc) {
      const auto& patch = grid.patches[gr * grid.grid_cols + gc];
      if (patch.size() != p * row_len) throw Error(ErrorCode::DimensionMismatch, "patch has wrong size");
      for (std::size_t y = 0; y < p; ++y) {
        std::copy_n(patch.begin() + static_cast<std::ptrdiff_t>(y * row_len), row_len,
                    &image.at(gr * p + y, gc * p));
      }
    }
  }
  return image;
}

template PatchGrid<std::uint8_t> patchify(const Image&, std::size_t);
template PatchGrid<double> patchify(const ImageF&, std::size_t);
template Image unpatchify(const PatchGrid<std::uint8_t>&);
template ImageF unpatchify(const PatchGrid<double>&);

}  // namespace sign::imaging
