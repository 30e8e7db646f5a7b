#include "fetrack/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace fetrack {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::Warn)};
std::mutex g_mutex;

const char* label(LogLevel l) {
  switch (l) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    default: return "";
  }
}
}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) < g_level.load() || level == LogLevel::Quiet) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << '[' << label(level) << "] " << message << '\n';
}

}  // namespace fetrack
