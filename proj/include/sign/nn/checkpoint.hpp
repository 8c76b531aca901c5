#pragma once

// Binary tensor archive.
//
//   "SIGNCKPT"                      8 bytes
//   version                         u32 (currently 1)
//   tensor count                    u32
//   per tensor:
//     name length, name bytes       u32, UTF-8
//     rank, dims                    u32, rank x u64
//     data                          f64, row-major
//
// All integers and doubles are little-endian regardless of host order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sign/nn/layers.hpp"
#include "sign/nn/tensor.hpp"

namespace sign::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

[[nodiscard]] std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
// Throws CorruptHeader for a bad magic or version, TruncatedData when the
// buffer ends early or has trailing bytes.
[[nodiscard]] std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
[[nodiscard]] std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

[[nodiscard]] std::vector<NamedTensor> snapshot(const ParameterSet& params);
// Copies values into params. Names and shapes must match one to one,
// otherwise Error(ConfigMismatch).
void restore(ParameterSet& params, const std::vector<NamedTensor>& tensors);

}  // namespace sign::nn
