#include "reachcls/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace reachcls {

namespace {

LogLevel parse_level(const char* text) {
  if (!text) return LogLevel::Info;
  const std::string_view v(text);
  if (v == "error") return LogLevel::Error;
  if (v == "warn") return LogLevel::Warn;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

std::atomic<int>& threshold() {
  static std::atomic<int> t{static_cast<int>(parse_level(std::getenv("REACHCLS_LOG")))};
  return t;
}

const char* label(LogLevel l) {
  switch (l) {
    case LogLevel::Error:
      return "error";
    case LogLevel::Warn:
      return "warn";
    case LogLevel::Info:
      return "info";
    case LogLevel::Debug:
      return "debug";
  }
  return "info";
}

}  // namespace

LogLevel log_threshold() { return static_cast<LogLevel>(threshold().load()); }

void set_log_threshold(LogLevel level) { threshold().store(static_cast<int>(level)); }

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > threshold().load()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[reachcls " << label(level) << "] " << message << '\n';
}

}  // namespace reachcls
