#include "gbdt2nn/log.hpp"

#include <iostream>
#include <mutex>

namespace gbdt2nn {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink() {
    static LogSink s = [](LogLevel level, const std::string& message) {
        std::cerr << (level == LogLevel::Warning ? "[warn] " : "[info] ") << message << '\n';
    };
    return s;
}

void emit(LogLevel level, const std::string& message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) sink()(level, message);
}

}  // namespace

void set_log_sink(LogSink s) {
    std::lock_guard lock(sink_mutex());
    sink() = std::move(s);
}

void log_info(const std::string& message) { emit(LogLevel::Info, message); }
void log_warning(const std::string& message) { emit(LogLevel::Warning, message); }

}  // namespace gbdt2nn
