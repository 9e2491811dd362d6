#include "ibpt_cli/manifest.hpp"

#include <ctime>

#include "json.hpp"

#ifndef IBPT_VERSION
#define IBPT_VERSION "0.0.0"
#endif

namespace ibpt::cli {

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["config"] = config;
  j["input_digests"] = input_digests;
  j["tool_version"] = tool_version;
  j["started_utc"] = started_utc;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return std::filesystem::path(output.string() + ".manifest.json");
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string tool_version() { return IBPT_VERSION; }

}  // namespace ibpt::cli
