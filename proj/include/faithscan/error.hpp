#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace faithscan {

// Every failure raised by the library carries one of these kinds so callers
// (and the CLI exit-code mapping) can tell them apart without string matching.
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  io,
  // container format
  bad_magic,
  unsupported_version,
  truncated_payload,
  length_mismatch,
  malformed_header,
  // judge verdict parsing
  malformed_json,
  missing_key,
  negative_probability,
  simplex_violation,
  template_slot,
  judge_transport,
  // numerics
  non_finite,
  single_class,
  config,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace faithscan
