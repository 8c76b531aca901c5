#include "sign/error.hpp"

namespace sign {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::ExplosionGuard: return "ExplosionGuard";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::IndivisibleDims: return "IndivisibleDims";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarRoot: return "NonScalarRoot";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::ConstantTargets: return "ConstantTargets";
    case ErrorCode::ConstantVector: return "ConstantVector";
    case ErrorCode::Io: return "Io";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
  }
  return "Unknown";
}

}  // namespace sign
