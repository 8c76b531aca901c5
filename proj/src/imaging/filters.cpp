#include <algorithm>
#include <cmath>

#include "sign/imaging.hpp"

namespace sign::imaging {
namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double t;
};

std::vector<Tap> sample_positions(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = out == 1 ? static_cast<double>(in - 1) / 2.0
                                : static_cast<double>(i) * static_cast<double>(in - 1) /
                                      static_cast<double>(out - 1);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

ImageF to_float(const Image& image) {
  std::vector<double> px(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), px.begin(),
                 [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
  return ImageF(image.height(), image.width(), image.channels(), std::move(px));
}

Image to_bytes(const ImageF& image) {
  std::vector<std::uint8_t> px(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), px.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v * 255.0), 0.0, 255.0));
  });
  return Image(image.height(), image.width(), image.channels(), std::move(px));
}

ImageF convert_channels(const ImageF& image, std::size_t channels) {
  if (image.channels() == channels) return image;
  ImageF out(image.height(), image.width(), channels);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      if (channels == 1) {
        out.at(y, x) = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
      } else {
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, x);
      }
    }
  }
  return out;
}

ImageF resize(const ImageF& image, std::size_t out_height, std::size_t out_width) {
  if (out_height == 0 || out_width == 0) {
    throw Error(ErrorCode::InvalidArgument, "resize target must be at least 1x1");
  }
  const auto ys = sample_positions(image.height(), out_height);
  const auto xs = sample_positions(image.width(), out_width);
  ImageF out(out_height, out_width, image.channels());
  for (std::size_t i = 0; i < out_height; ++i) {
    const Tap& ty = ys[i];
    for (std::size_t j = 0; j < out_width; ++j) {
      const Tap& tx = xs[j];
      for (std::size_t c = 0; c < image.channels(); ++c) {
        const double top = lerp(image.at(ty.lo, tx.lo, c), image.at(ty.lo, tx.hi, c), tx.t);
        const double bottom = lerp(image.at(ty.hi, tx.lo, c), image.at(ty.hi, tx.hi, c), tx.t);
        out.at(i, j, c) = lerp(top, bottom, ty.t);
      }
    }
  }
  return out;
}

Image resize(const Image& image, std::size_t out_height, std::size_t out_width) {
  std::vector<double> px(image.pixels().begin(), image.pixels().end());
  const ImageF wide(image.height(), image.width(), image.channels(), std::move(px));
  const ImageF scaled = resize(wide, out_height, out_width);
  std::vector<std::uint8_t> bytes(scaled.pixels().size());
  std::transform(scaled.pixels().begin(), scaled.pixels().end(), bytes.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 1e-7), 0.0, 255.0));
  });
  return Image(out_height, out_width, image.channels(), std::move(bytes));
}

ImageF gaussian_blur(const ImageF& image, double sigma) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "blur sigma must be >= 0");
  if (sigma == 0.0) return image;
  const std::vector<double> k = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto h = static_cast<std::ptrdiff_t>(image.height());
  const auto w = static_cast<std::ptrdiff_t>(image.width());
  const std::size_t ch = image.channels();
  auto clamp_to = [](std::ptrdiff_t v, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(v, 0, n - 1); };

  ImageF horizontal(image.height(), image.width(), ch);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
          acc += k[static_cast<std::size_t>(d + radius)] * image.at(y, clamp_to(x + d, w), c);
        }
        horizontal.at(y, x, c) = acc;
      }
    }
  }
  ImageF out(image.height(), image.width(), ch);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
          acc += k[static_cast<std::size_t>(d + radius)] * horizontal.at(clamp_to(y + d, h), x, c);
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma == 0.0) return image;
  std::vector<double> px(image.pixels().begin(), image.pixels().end());
  const ImageF blurred =
      gaussian_blur(ImageF(image.height(), image.width(), image.channels(), std::move(px)), sigma);
  std::vector<std::uint8_t> bytes(blurred.pixels().size());
  std::transform(blurred.pixels().begin(), blurred.pixels().end(), bytes.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  });
  return Image(image.height(), image.width(), image.channels(), std::move(bytes));
}

GistInput make_gist_input(const ImageF& image, const std::optional<ImageF>& context,
                          std::size_t gist_size, double sigma) {
  if (gist_size < 8) throw Error(ErrorCode::InvalidArgument, "gist size must be >= 8");
  GistInput gist;
  gist.image = resize(gaussian_blur(image, sigma), gist_size, gist_size);
  if (context) gist.context = resize(gaussian_blur(*context, sigma), gist_size, gist_size);
  return gist;
}

}  // namespace sign::imaging
