// Copyright (c) 2026 The marblevad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace marblevad {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace log_detail {
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& msg) {
    std::cerr << (level == LogLevel::kWarning ? "WARNING: " : "") << msg << '\n';
  };
  return s;
}
}  // namespace log_detail

// Replaces the process-wide sink; returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(log_detail::mutex());
  return std::exchange(log_detail::sink(), std::move(sink));
}

inline void log_message(LogLevel level, const std::string& msg) {
  std::lock_guard lock(log_detail::mutex());
  if (log_detail::sink()) log_detail::sink()(level, msg);
}

inline void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }
inline void log_warning(const std::string& msg) { log_message(LogLevel::kWarning, msg); }

}  // namespace marblevad
