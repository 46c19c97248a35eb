#include "bridgestain/error.hpp"

namespace bridgestain {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::invalid_step: return "invalid-step";
    case ErrorCode::empty_result: return "empty-result";
    case ErrorCode::incompatible_checkpoint: return "incompatible-checkpoint";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace bridgestain
