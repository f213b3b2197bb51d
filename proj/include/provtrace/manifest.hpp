#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace provtrace {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything needed to reproduce a run: the exact command, the effective
// configuration, input fingerprints and the seed. Written atomically next
// to the run's outputs.
struct RunManifest {
  std::string command_line;
  std::string config_json;  // effective per-subcommand settings
  std::vector<std::pair<std::string, std::string>> input_hashes;  // path, fnv
  std::uint64_t seed = 0;
  double duration_seconds = 0.0;
  std::vector<std::string> outputs;

  void add_input(const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace provtrace
