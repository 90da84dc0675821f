#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oodgate {

enum class ErrorCode {
  InvalidDimension,
  InvalidParameter,
  InvalidInput,
  InvalidState,
  FitError,
  InvalidContainer,
  NotOodf,
  UnsupportedVersion,
  Corrupt,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace oodgate
