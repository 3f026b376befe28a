#pragma once
/// @file format.hpp
/// @brief Number formatting for machine-readable outputs.

#include <charconv>
#include <string>

namespace igw {

/// 17 significant digits, enough to round-trip every double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace igw
