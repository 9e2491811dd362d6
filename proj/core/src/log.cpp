#include "log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

#include "ibpt/error.hpp"
#include "ibpt/logging.hpp"

namespace ibpt {

namespace {

spdlog::level::level_enum parse_level(std::string_view level) {
  const auto lvl = spdlog::level::from_str(std::string(level));
  if (lvl == spdlog::level::off && level != "off") {
    throw Error(ErrorKind::kInvalidArgument, "unknown log level '" + std::string(level) + "'");
  }
  return lvl;
}

}  // namespace

namespace log {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("ibpt");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("IBPT_LOG");
    spdlog::level::level_enum lvl = spdlog::level::warn;
    if (env != nullptr && *env != '\0') {
      try {
        lvl = parse_level(env);
      } catch (const Error&) {
        lvl = spdlog::level::warn;
      }
    }
    l->set_level(lvl);
    return l;
  }();
  return instance;
}

}  // namespace log

void set_log_level(std::string_view level) { log::logger()->set_level(parse_level(level)); }

}  // namespace ibpt
