#include "policysim/error.hpp"

namespace policysim {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kUnknownId: return "unknown identifier";
    case ErrorCode::kShape: return "shape mismatch";
    case ErrorCode::kComponent: return "disconnected graph";
    case ErrorCode::kEmptyPool: return "empty memory pool";
    case ErrorCode::kTemplate: return "template error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kBackend: return "backend error";
    case ErrorCode::kCorruptLog: return "corrupt event log";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace policysim
