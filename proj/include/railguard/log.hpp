#pragma once

// Diagnostic stream. Verbosity comes from RAILGUARD_LOG
// (error | warn | info | debug; default warn).

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace railguard::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level level_from_env() {
  const char* v = std::getenv("RAILGUARD_LOG");
  if (!v) return Level::warn;
  const std::string_view s(v);
  if (s == "error") return Level::error;
  if (s == "info") return Level::info;
  if (s == "debug") return Level::debug;
  return Level::warn;
}

inline Level& threshold() {
  static Level l = level_from_env();
  return l;
}

inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}

inline void write(Level l, std::string_view msg) {
  if (l > threshold()) return;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mutex());
  std::cerr << "railguard: " << names[static_cast<int>(l)] << ": " << msg << '\n';
}

inline void error(std::string_view m) { write(Level::error, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void debug(std::string_view m) { write(Level::debug, m); }

}  // namespace railguard::log
