#include "oodgate/error.hpp"

namespace oodgate {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::FitError: return "FitError";
    case ErrorCode::InvalidContainer: return "InvalidContainer";
    case ErrorCode::NotOodf: return "NotOodf";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::Corrupt: return "Corrupt";
  }
  return "Unknown";
}

}  // namespace oodgate
