#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ibpt {

enum class ErrorKind {
  kDimensionMismatch,
  kInvalidDistribution,
  kInvalidArgument,
  kDeadSupport,
  kZeroPerturbation,
  kOutsideSimplex,
  kDegenerateBatch,
  kIo,
  kNumerical,
};

std::string_view to_string(ErrorKind kind);

// Every recoverable failure in the library surfaces as an ibpt::Error.
// `kind` drives the CLI exit code; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Input errors (bad files, bad shapes, bad parameters) as opposed to
  // failures of the numerics on otherwise valid input.
  bool is_input_error() const noexcept { return kind_ != ErrorKind::kNumerical && kind_ != ErrorKind::kDeadSupport; }

 private:
  ErrorKind kind_;
};

}  // namespace ibpt
