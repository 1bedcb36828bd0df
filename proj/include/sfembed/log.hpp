#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace sfe {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Log level comes from SFE_LOG in {error, info, debug}; default error.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("SFE_LOG");
    if (env && std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    if (env && std::strcmp(env, "info") == 0) return LogLevel::Info;
    return LogLevel::Error;
  }();
  return level;
}

}  // namespace sfe

#define SFE_LOG_AT(level, fmt, ...)                             \
  do {                                                          \
    if (static_cast<int>(::sfe::log_level()) >=                 \
        static_cast<int>(level)) {                              \
      std::fprintf(stderr, fmt "\n", ##__VA_ARGS__);            \
    }                                                           \
  } while (0)

#define SFE_LOG_ERROR(fmt, ...) \
  SFE_LOG_AT(::sfe::LogLevel::Error, "[sfe error] " fmt, ##__VA_ARGS__)
#define SFE_LOG_INFO(fmt, ...) \
  SFE_LOG_AT(::sfe::LogLevel::Info, "[sfe info] " fmt, ##__VA_ARGS__)
#define SFE_LOG_DEBUG(fmt, ...) \
  SFE_LOG_AT(::sfe::LogLevel::Debug, "[sfe debug] " fmt, ##__VA_ARGS__)
