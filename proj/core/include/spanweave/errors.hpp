#pragma once

#include <stdexcept>
#include <string>

namespace spanweave {

enum class ErrorCode {
  Io,
  OutOfOrderTimestamp,
  UnknownDevice,
  ContractViolation,
  Config,
  WindowInverted,
  TraceNotFound,
  IncompleteTrace,
  Format,
};

std::string_view to_string(ErrorCode code);

/// Fatal error. `component()` names the component (or source) the error is
/// attributed to, when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string component = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& component() const noexcept { return component_; }

 private:
  ErrorCode code_;
  std::string component_;
};

}  // namespace spanweave
