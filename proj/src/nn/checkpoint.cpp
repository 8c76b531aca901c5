#include "sign/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include "sign/error.hpp"

namespace sign::nn {
namespace {

constexpr std::string_view kMagic = "SIGNCKPT";

template <typename T>
void put(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::TruncatedData, "checkpoint ends at byte " + std::to_string(bytes_.size()) +
                                                " while reading " + std::to_string(n) + " more");
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) put(out, static_cast<std::uint64_t>(d));
    for (double v : t.tensor.values()) put(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    throw Error(ErrorCode::CorruptHeader, "not a checkpoint: bad magic");
  }
  Reader r(bytes);
  (void)r.take(kMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::CorruptHeader, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.take(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>();
      n *= d;
    }
    if (n > r.remaining() / 8) {
      throw Error(ErrorCode::TruncatedData, "tensor " + t.name + " of shape " + shape_string(shape) +
                                                " exceeds the remaining " + std::to_string(r.remaining()) +
                                                " bytes");
    }
    std::vector<double> data(n);
    for (double& v : data) v = r.get<double>();
    t.tensor = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::TruncatedData, std::to_string(r.remaining()) + " trailing bytes after checkpoint");
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw Error(ErrorCode::Io, "cannot write " + path.string());
  }
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> snapshot(const ParameterSet& params) {
  std::vector<NamedTensor> out;
  for (const auto& e : params.entries()) out.push_back({e.name, e.var.value()});
  return out;
}

void restore(ParameterSet& params, const std::vector<NamedTensor>& tensors) {
  const auto& entries = params.entries();
  if (entries.size() != tensors.size()) {
    throw Error(ErrorCode::ConfigMismatch, "checkpoint holds " + std::to_string(tensors.size()) +
                                               " tensors, model expects " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (entries[i].name != tensors[i].name || entries[i].var.shape() != tensors[i].tensor.shape()) {
      throw Error(ErrorCode::ConfigMismatch, "checkpoint tensor " + tensors[i].name + " " +
                                                 shape_string(tensors[i].tensor.shape()) + " does not match " +
                                                 entries[i].name + " " + shape_string(entries[i].var.shape()));
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Var v = entries[i].var;
    v.mutable_value() = tensors[i].tensor;
  }
}

}  // namespace sign::nn
