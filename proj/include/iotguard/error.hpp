#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iotguard {

enum class ErrorKind {
  io,
  schema,
  empty_input,
  stratification,
  unimputable_column,
  insufficient_minority,
  resample,
  insufficient_data,
  parameter,
  infeasible_mask,
  degenerate_population,
  degenerate_labels,
  domain,
  shape,
  config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::schema: return "schema";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::stratification: return "stratification";
    case ErrorKind::unimputable_column: return "unimputable_column";
    case ErrorKind::insufficient_minority: return "insufficient_minority";
    case ErrorKind::resample: return "resample";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::infeasible_mask: return "infeasible_mask";
    case ErrorKind::degenerate_population: return "degenerate_population";
    case ErrorKind::degenerate_labels: return "degenerate_labels";
    case ErrorKind::domain: return "domain";
    case ErrorKind::shape: return "shape";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying
/// its kind, so callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Wraps an error raised inside a pipeline phase with the phase name.
class PhaseError : public Error {
 public:
  PhaseError(std::string phase, const Error& inner)
      : Error(inner.kind(), "phase '" + phase + "': " + inner.what()), phase_(std::move(phase)) {}

  const std::string& phase() const noexcept { return phase_; }

 private:
  std::string phase_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace iotguard
