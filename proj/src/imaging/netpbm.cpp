#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "sign/imaging.hpp"

namespace sign::imaging {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Returns nullopt at end of input; throws on a non-digit token.
  std::optional<std::size_t> next_number(const char* what, ErrorCode on_error) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) return std::nullopt;
    if (!std::isdigit(bytes_[pos_])) {
      throw Error(on_error, std::string("expected ") + what + " at byte " + std::to_string(pos_));
    }
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 31)) throw Error(on_error, std::string(what) + " is too large");
      ++pos_;
    }
    return value;
  }

  std::size_t header_number(const char* what) {
    const auto v = next_number(what, ErrorCode::CorruptHeader);
    if (!v) throw Error(ErrorCode::CorruptHeader, std::string("missing ") + what);
    return *v;
  }

  [[nodiscard]] std::size_t pos() const noexcept { return pos_; }
  void advance(std::size_t n) noexcept { pos_ += n; }
  [[nodiscard]] bool at_end() const noexcept { return pos_ >= bytes_.size(); }
  [[nodiscard]] std::uint8_t peek() const { return bytes_[pos_]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw Error(ErrorCode::UnsupportedFormat, "not a netpbm file");
  }
  const char kind = static_cast<char>(bytes[1]);
  std::size_t channels = 0;
  bool binary = false;
  switch (kind) {
    case '2': channels = 1; break;
    case '3': channels = 3; break;
    case '5': channels = 1; binary = true; break;
    case '6': channels = 3; binary = true; break;
    default:
      throw Error(ErrorCode::UnsupportedFormat, std::string("netpbm variant P") + kind + " is not supported");
  }
  HeaderReader reader(bytes);
  reader.advance(2);
  if (!reader.at_end() && !std::isspace(reader.peek()) && reader.peek() != '#') {
    throw Error(ErrorCode::CorruptHeader, "magic number is not followed by whitespace");
  }
  const std::size_t width = reader.header_number("width");
  const std::size_t height = reader.header_number("height");
  const std::size_t maxval = reader.header_number("maxval");
  if (width == 0 || height == 0) throw Error(ErrorCode::CorruptHeader, "zero image dimension");
  if (maxval != 255) {
    throw Error(ErrorCode::UnsupportedFormat, "only maxval 255 is supported, got " + std::to_string(maxval));
  }
  const std::size_t count = width * height * channels;
  std::vector<std::uint8_t> pixels(count);
  if (binary) {
    if (reader.at_end() || !std::isspace(reader.peek())) {
      throw Error(ErrorCode::CorruptHeader, "maxval must be followed by a single whitespace byte");
    }
    reader.advance(1);
    const std::size_t available = bytes.size() - std::min(bytes.size(), reader.pos());
    if (available < count) {
      throw Error(ErrorCode::TruncatedData, "raster has " + std::to_string(available) +
                                                " bytes, header declares " + std::to_string(count));
    }
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), count, pixels.begin());
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = reader.next_number("sample", ErrorCode::CorruptHeader);
      if (!v) {
        throw Error(ErrorCode::TruncatedData, "raster has " + std::to_string(i) +
                                                  " samples, header declares " + std::to_string(count));
      }
      if (*v > maxval) throw Error(ErrorCode::CorruptHeader, "sample exceeds maxval");
      pixels[i] = static_cast<std::uint8_t>(*v);
    }
  }
  return Image(height, width, channels, std::move(pixels));
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_netpbm(const Image& image, NetpbmEncoding encoding) {
  const bool rgb = image.channels() == 3;
  const bool plain = encoding == NetpbmEncoding::Plain;
  const char* magic = rgb ? (plain ? "P3" : "P6") : (plain ? "P2" : "P5");
  std::string header = std::string(magic) + "\n" + std::to_string(image.width()) + " " +
                       std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  if (!plain) {
    out.insert(out.end(), image.pixels().begin(), image.pixels().end());
    return out;
  }
  std::size_t line = 0;
  for (const std::uint8_t v : image.pixels()) {
    const std::string token = std::to_string(v);
    if (line + token.size() + 1 > 70) {
      out.push_back('\n');
      line = 0;
    } else if (line > 0) {
      out.push_back(' ');
      ++line;
    }
    out.insert(out.end(), token.begin(), token.end());
    line += token.size();
  }
  out.push_back('\n');
  return out;
}

void save_image(const std::filesystem::path& path, const Image& image, NetpbmEncoding encoding) {
  const auto bytes = encode_netpbm(image, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace sign::imaging
