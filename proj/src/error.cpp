#include "faithscan/error.hpp"

namespace faithscan {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::shape_mismatch: return "shape mismatch";
    case ErrorKind::io: return "io error";
    case ErrorKind::bad_magic: return "bad magic";
    case ErrorKind::unsupported_version: return "unsupported version";
    case ErrorKind::truncated_payload: return "truncated payload";
    case ErrorKind::length_mismatch: return "header/payload length mismatch";
    case ErrorKind::malformed_header: return "malformed header";
    case ErrorKind::malformed_json: return "malformed json";
    case ErrorKind::missing_key: return "missing key";
    case ErrorKind::negative_probability: return "negative probability";
    case ErrorKind::simplex_violation: return "simplex violation";
    case ErrorKind::template_slot: return "missing template slot";
    case ErrorKind::judge_transport: return "judge transport";
    case ErrorKind::non_finite: return "non-finite value";
    case ErrorKind::single_class: return "single class";
    case ErrorKind::config: return "config error";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace faithscan
