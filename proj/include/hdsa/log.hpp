#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>

namespace hdsa {

/// Verbosity from the HDSA_LOG environment variable: 0 (default, silent),
/// 1 (phase progress), 2 (per-sample detail). Messages go to stderr so they
/// never mix with machine-readable stdout output.
inline int log_level() {
  static const int level = [] {
    const char* v = std::getenv("HDSA_LOG");
    if (v == nullptr) return 0;
    return std::atoi(v);
  }();
  return level;
}

template <typename... Args>
void log_line(int level, Args&&... args) {
  if (log_level() < level) return;
  std::ostringstream os;
  (os << ... << args);
  std::cerr << "[hdsa] " << os.str() << "\n";
}

}  // namespace hdsa
