#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vitprobe {

/// Coarse failure class surfaced by the CLI as a message prefix.
enum class ErrorCategory { Config, Data, IO, Numeric };

/// Fine-grained failure kind; each maps onto exactly one category.
enum class ErrorKind {
  Dimension,   // shape mismatch between operands
  Tap,         // tap address outside the model
  Spec,        // invalid configuration / spec value
  Schedule,    // learning-rate schedule queried out of range
  Data,        // labels, empty splits, malformed datasets
  Split,       // not enough samples to split
  Evaluation,  // probe/test mismatch
  Storage,     // I/O failure
  Corruption,  // container integrity failure
  Fit,         // probe fit impossible (e.g. single class)
};

ErrorCategory category_of(ErrorKind kind) noexcept;
std::string_view category_name(ErrorCategory category) noexcept;
std::string_view kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace vitprobe
