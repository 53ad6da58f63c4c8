#pragma once

#include <charconv>
#include <string>

namespace protoattend::detail {

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

}  // namespace protoattend::detail
