#include "provtrace/manifest.hpp"

#include "provtrace/io_util.hpp"
#include "json.hpp"

namespace provtrace {

using ordered_json = nlohmann::ordered_json;

void RunManifest::add_input(const std::string& path) {
  input_hashes.emplace_back(path, hex64(fnv1a64_file(path)));
}

void RunManifest::write(const std::string& path) const {
  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["command_line"] = command_line;
  j["config"] = nlohmann::json::parse(config_json.empty() ? "{}"
                                                          : config_json);
  ordered_json inputs = ordered_json::object();
  for (const auto& [p, h] : input_hashes) inputs[p] = h;
  j["inputs"] = std::move(inputs);
  j["seed"] = seed;
  j["duration_seconds"] = duration_seconds;
  j["outputs"] = outputs;
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace provtrace
