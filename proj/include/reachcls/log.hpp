#pragma once

#include <string>

namespace reachcls {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Threshold read once from REACHCLS_LOG (error|warn|info|debug); default info.
LogLevel log_threshold();
void set_log_threshold(LogLevel level);

/// Writes "[reachcls level] message" to stderr when `level` passes the threshold.
void log_message(LogLevel level, const std::string& message);

inline void log_error(const std::string& m) { log_message(LogLevel::Error, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }

}  // namespace reachcls
