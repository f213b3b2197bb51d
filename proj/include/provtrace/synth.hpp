#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "provtrace/events.hpp"

namespace provtrace {

// Seeded generator for benign process trees plus injected low-and-slow
// attack chains. The actor/object wiring is chosen so the provenance
// construction recovers exactly the generated tree: every event gets a
// fresh object entity id and each child's actor id equals its parent's
// object id.
struct GeneratorConfig {
  std::size_t n_hosts = 1;
  std::size_t benign_trees_per_host = 620;
  double branching_p = 0.45;   // P(k children) = (1-p)^k * p
  std::size_t depth_cap = 14;
  std::size_t max_tree_nodes = 400;

  // per-class categorical weights aligned with the schema lists
  std::vector<double> benign_object_weights{0.50, 0.30, 0.15, 0.05};
  std::vector<double> benign_action_weights{0.30, 0.30, 0.25, 0.05,
                                            0.05, 0.02, 0.02, 0.01};
  std::vector<double> malicious_object_weights{0.20, 0.30, 0.30, 0.20};
  std::vector<double> malicious_action_weights{0.05, 0.05, 0.10, 0.20,
                                               0.25, 0.10, 0.10, 0.15};

  double mean_benign_delay = 1.0;     // seconds, exponential
  double mean_malicious_delay = 8.0;  // encodes the slow attack cadence

  std::size_t chains_per_host = 700;
  std::size_t chain_min = 6;
  std::size_t chain_max = 14;
  // Fraction of chains that keep the benign object/action mix and are
  // recognizable only by their timing.
  double stealth_fraction = 0.5;

  std::uint64_t seed = 7;

  void validate(const DatasetSchema& schema) const;
};

struct SynthOutput {
  std::vector<RawEvent> events;  // canonical (ts, id) order
  LabelSet labels;
  std::vector<std::vector<std::string>> chains;  // manifest content
  DatasetSchema schema;
  // generator ground truth, for reconstruction-fidelity checks
  std::unordered_map<std::string, std::string> true_parent;
};

SynthOutput generate(const GeneratorConfig& cfg);
SynthOutput generate(const GeneratorConfig& cfg, const DatasetSchema& schema);

}  // namespace provtrace
