#ifndef CURVEMIX_LOGGING_HPP
#define CURVEMIX_LOGGING_HPP

#include <string>

namespace curvemix {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level parsed from the CURVEMIX_LOG environment variable (default warn).
LogLevel log_level();
void set_log_level(LogLevel level);

void log_message(LogLevel level, const std::string& msg);

inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::Debug, msg); }

}  // namespace curvemix

#endif
