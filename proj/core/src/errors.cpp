#include "spanweave/errors.hpp"

namespace spanweave {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
      return "IoError";
    case ErrorCode::OutOfOrderTimestamp:
      return "OutOfOrderTimestamp";
    case ErrorCode::UnknownDevice:
      return "UnknownDevice";
    case ErrorCode::ContractViolation:
      return "ContractViolation";
    case ErrorCode::Config:
      return "ConfigError";
    case ErrorCode::WindowInverted:
      return "WindowInverted";
    case ErrorCode::TraceNotFound:
      return "TraceNotFound";
    case ErrorCode::IncompleteTrace:
      return "IncompleteTrace";
    case ErrorCode::Format:
      return "FormatError";
  }
  return "Error";
}

namespace {

std::string compose(ErrorCode code, const std::string& message, const std::string& component) {
  std::string out(to_string(code));
  if (!component.empty()) out += " [" + component + "]";
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message, std::string component)
    : std::runtime_error(compose(code, message, component)),
      code_(code),
      component_(std::move(component)) {}

}  // namespace spanweave
