#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace ibpt::log {

std::shared_ptr<spdlog::logger> logger();

template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
  logger()->debug(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
  logger()->info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
  logger()->warn(fmt, std::forward<Args>(args)...);
}

}  // namespace ibpt::log
