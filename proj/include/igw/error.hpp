#pragma once
/// @file error.hpp
/// @brief Exception type shared by every igw module.

#include <stdexcept>
#include <string>

namespace igw {

/// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  parse,
  coupling_invalid,
  unsupported_marginals,
  size_guard,
  singular,
  flow_degenerate,
  inner_divergence,
  non_finite,
  map_does_not_exist,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::parse: return "parse";
    case ErrorKind::coupling_invalid: return "coupling-invalid";
    case ErrorKind::unsupported_marginals: return "unsupported-marginals";
    case ErrorKind::size_guard: return "size-guard";
    case ErrorKind::singular: return "singular";
    case ErrorKind::flow_degenerate: return "flow-degenerate";
    case ErrorKind::inner_divergence: return "inner-divergence";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::map_does_not_exist: return "map-does-not-exist";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {
inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}
}  // namespace detail

}  // namespace igw
