#pragma once

#include <charconv>
#include <cstdint>
#include <string>

#include "hscd/common.hpp"

namespace hscd::textio {

// Shortest decimal form that parses back to the exact same bits.
inline std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& field,
                           const std::string& origin) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(origin + ": field " + field + " is not a number: " + s);
  return v;
}

inline int64_t parse_int(const std::string& s, const std::string& field,
                         const std::string& origin) {
  int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(origin + ": field " + field + " is not an integer: " + s);
  return v;
}

inline uint64_t parse_uint(const std::string& s, const std::string& field,
                           const std::string& origin) {
  uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(origin + ": field " + field + " is not a nonnegative integer: " + s);
  return v;
}

}  // namespace hscd::textio
