#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "provtrace/tensor.hpp"

namespace provtrace {

// Container format (little endian):
//   bytes 0..7    magic "PTCKPT1\n"
//   bytes 8..15   u64 header length in bytes
//   header        JSON: {"kind", "config", "vocab_fingerprint", "step",
//                        "params":[{"name","rows","cols"}, ...]}
//   payload       raw f64 blocks, one per params[] entry, in order
struct CheckpointHeader {
  std::string kind;          // "transformer" | "lstm"
  std::string config_json;   // model-kind specific
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<const Param*>& params);

// Reads the header without touching the payload.
CheckpointHeader peek_checkpoint(const std::string& path);

// Loads values into `params`; names and shapes must match the file exactly.
CheckpointHeader load_checkpoint(const std::string& path,
                                 const std::vector<Param*>& params);

}  // namespace provtrace
