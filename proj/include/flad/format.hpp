#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace flad {

/// Shortest decimal string that parses back to exactly `x`.
inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

}  // namespace flad
