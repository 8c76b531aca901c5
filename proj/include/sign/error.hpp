#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sign {

enum class ErrorCode {
  InvalidArgument,
  AllMasked,
  ExplosionGuard,
  DimensionMismatch,
  UnsupportedFormat,
  CorruptHeader,
  TruncatedData,
  IndivisibleDims,
  ShapeMismatch,
  NonScalarRoot,
  ConfigMismatch,
  EmptyBatch,
  EmptyEnsemble,
  TooFewRecords,
  ConstantTargets,
  ConstantVector,
  Io,
  NonFiniteLoss,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sign
