#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ibpt::cli {

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  unsigned long long seed = 0;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64
  std::string tool_version;
  std::string started_utc;
  double wall_seconds = 0.0;

  std::string to_json() const;
};

std::filesystem::path manifest_path(const std::filesystem::path& output);
std::string utc_timestamp(std::chrono::system_clock::time_point t);
std::string tool_version();

}  // namespace ibpt::cli
