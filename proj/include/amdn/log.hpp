#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <utility>

namespace amdn {

enum class LogLevel { Info, Warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace detail {
inline LogSink& log_sink() {
  static LogSink sink = [](LogLevel level, const std::string& msg) {
    std::cerr << (level == LogLevel::Warning ? "warning: " : "") << msg << '\n';
  };
  return sink;
}
}  // namespace detail

/// Replaces the process-wide log sink and returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  return std::exchange(detail::log_sink(), std::move(sink));
}

inline void log_info(const std::string& msg) { detail::log_sink()(LogLevel::Info, msg); }
inline void log_warning(const std::string& msg) { detail::log_sink()(LogLevel::Warning, msg); }

/// Installs a sink for the lifetime of the guard, restoring the old one on exit.
class ScopedLogSink {
 public:
  explicit ScopedLogSink(LogSink sink) : previous_(set_log_sink(std::move(sink))) {}
  ~ScopedLogSink() { set_log_sink(std::move(previous_)); }
  ScopedLogSink(const ScopedLogSink&) = delete;
  ScopedLogSink& operator=(const ScopedLogSink&) = delete;

 private:
  LogSink previous_;
};

}  // namespace amdn
