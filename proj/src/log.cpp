#include "kalbucy/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace kalbucy {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink;
  return sink;
}

std::atomic<int>& threshold() {
  static std::atomic<int> t{static_cast<int>(LogLevel::info)};
  return t;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
  }
  return "?";
}

}  // namespace

void set_log_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  current_sink() = std::move(sink);
}

void set_log_threshold(LogLevel level) { threshold().store(static_cast<int>(level)); }

void log_message(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) < threshold().load()) return;
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(level, message);
    return;
  }
  std::clog << "[kalbucy " << level_name(level) << "] " << message << '\n';
}

}  // namespace kalbucy
