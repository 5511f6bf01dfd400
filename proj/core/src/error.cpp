#include "vitprobe/error.hpp"

namespace vitprobe {

ErrorCategory category_of(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension:
    case ErrorKind::Tap:
    case ErrorKind::Spec:
    case ErrorKind::Schedule:
      return ErrorCategory::Config;
    case ErrorKind::Data:
    case ErrorKind::Split:
    case ErrorKind::Evaluation:
      return ErrorCategory::Data;
    case ErrorKind::Storage:
    case ErrorKind::Corruption:
      return ErrorCategory::IO;
    case ErrorKind::Fit:
      return ErrorCategory::Numeric;
  }
  return ErrorCategory::Config;
}

std::string_view category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Config: return "CONFIG";
    case ErrorCategory::Data: return "DATA";
    case ErrorCategory::IO: return "IO";
    case ErrorCategory::Numeric: return "NUMERIC";
  }
  return "CONFIG";
}

std::string_view kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Tap: return "tap error";
    case ErrorKind::Spec: return "spec error";
    case ErrorKind::Schedule: return "schedule error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Split: return "split error";
    case ErrorKind::Evaluation: return "evaluation error";
    case ErrorKind::Storage: return "storage error";
    case ErrorKind::Corruption: return "corruption error";
    case ErrorKind::Fit: return "fit error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace vitprobe
