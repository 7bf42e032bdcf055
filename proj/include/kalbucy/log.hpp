#pragma once

#include <functional>
#include <string_view>

namespace kalbucy {

enum class LogLevel { debug, info, warning, error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

// Replaces the process-wide sink. Passing an empty function restores the
// default sink, which writes to stderr.
void set_log_sink(LogSink sink);

// Messages below `level` are dropped.
void set_log_threshold(LogLevel level);

void log_message(LogLevel level, std::string_view message);

inline void log_info(std::string_view message) { log_message(LogLevel::info, message); }
inline void log_warning(std::string_view message) { log_message(LogLevel::warning, message); }

}  // namespace kalbucy
