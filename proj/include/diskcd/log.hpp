#pragma once

#include <functional>
#include <string>

namespace diskcd {

enum class LogLevel { Info, Warn };

using LogHandler = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide handler; an empty handler restores the stderr
// default. Single-threaded by design (loading and training are serialized).
void set_log_handler(LogHandler handler);

void log_message(LogLevel level, const std::string& msg);
inline void warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void info(const std::string& msg) { log_message(LogLevel::Info, msg); }

}  // namespace diskcd
