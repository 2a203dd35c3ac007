#pragma once

#include <functional>
#include <string>

namespace gbdt2nn {

enum class LogLevel { Info, Warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: stderr). Pass nullptr to silence.
void set_log_sink(LogSink sink);
void log_info(const std::string& message);
void log_warning(const std::string& message);

}  // namespace gbdt2nn
