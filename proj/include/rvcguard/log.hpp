#pragma once

#include <functional>
#include <iostream>
#include <string_view>

namespace rvcguard::log {

using Sink = std::function<void(std::string_view)>;

// Process-wide warning sink. Defaults to stderr; tests swap it out to capture
// messages. Not synchronized: install a sink before spawning workers.
inline Sink& warning_sink() {
  static Sink sink = [](std::string_view msg) {
    std::clog << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

// RAII swap of the warning sink.
class ScopedSink {
 public:
  explicit ScopedSink(Sink sink) : saved_(std::move(warning_sink())) {
    warning_sink() = std::move(sink);
  }
  ~ScopedSink() { warning_sink() = std::move(saved_); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  Sink saved_;
};

}  // namespace rvcguard::log
