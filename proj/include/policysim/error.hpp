#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace policysim {

enum class ErrorCode {
  kInvalidArgument,
  kUnknownId,
  kShape,
  kComponent,
  kEmptyPool,
  kTemplate,
  kParse,
  kConfig,
  kBackend,
  kCorruptLog,
  kIo,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when a remote backend stays unreachable after its retry budget.
class BackendUnavailable : public Error {
 public:
  explicit BackendUnavailable(const std::string& message)
      : Error(ErrorCode::kBackend, message) {}
};

}  // namespace policysim
