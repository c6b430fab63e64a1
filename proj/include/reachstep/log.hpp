#pragma once

#include <string>

namespace reachstep {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Threshold read once from REACHSTEP_LOG (error, warn, info, debug);
/// defaults to warn.
LogLevel log_level();
void set_log_level(LogLevel level);

/// Writes one line to stderr when `level` passes the threshold.
void log(LogLevel level, const std::string& message);

inline void log_warn(const std::string& m) { log(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log(LogLevel::Debug, m); }

}  // namespace reachstep
