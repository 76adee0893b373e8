#pragma once

#include <iostream>
#include <set>
#include <string>

namespace vampnet {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::Warn;
  return level;
}

inline void log_warning(const std::string& msg) {
  if (log_level() >= LogLevel::Warn) std::cerr << "warning: " << msg << '\n';
}

/// Emits a warning the first time `key` is seen in this process.
inline void log_warning_once(const std::string& key, const std::string& msg) {
  static std::set<std::string> seen;
  if (seen.insert(key).second) log_warning(msg);
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << msg << '\n';
}

}  // namespace vampnet
