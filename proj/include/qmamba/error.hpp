#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qmamba {

enum class ErrorCode {
  kShape,
  kValidation,
  kHeader,
  kTruncated,
  kWeightMismatch,
  kFormat,
  kIo,
  kNumeric,
};

std::string_view to_string(ErrorCode code);

/// Structured error carried by every failing operation in the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qmamba
