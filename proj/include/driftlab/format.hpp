#pragma once

#include <cstdio>
#include <string>

namespace driftlab {

/// Twelve significant digits; what every CSV cell uses.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

/// Round-trip precision, for descriptors that are parsed back.
inline std::string format_double_exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace driftlab
