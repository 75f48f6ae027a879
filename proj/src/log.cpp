#include "diskcd/log.hpp"

#include <cstdio>
#include <utility>

namespace diskcd {

namespace {
LogHandler g_handler;
}

void set_log_handler(LogHandler handler) { g_handler = std::move(handler); }

void log_message(LogLevel level, const std::string& msg) {
  if (g_handler) {
    g_handler(level, msg);
    return;
  }
  std::fprintf(stderr, "[%s] %s\n", level == LogLevel::Warn ? "warn" : "info", msg.c_str());
}

}  // namespace diskcd
