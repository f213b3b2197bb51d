#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "provtrace/events.hpp"

namespace provtrace {

struct ProvenanceNode {
  std::string id;
  std::string object;
  std::string action;
  double timestamp = 0.0;
  double time_delta = 0.0;  // child ts minus parent ts; 0 for roots
  std::string host;
  std::vector<std::string> children;  // ordered by child (ts, id)
  bool malicious = false;
};

// Forest of provenance trees keyed by event id. `order` lists ids in the
// (ts, id) total order used everywhere downstream.
struct ProvenanceTree {
  std::unordered_map<std::string, ProvenanceNode> nodes;
  std::vector<std::string> order;
  std::vector<std::string> roots;

  const ProvenanceNode& node(const std::string& id) const;
};

// Child -> parent inversion of the tree, for leaf-to-root walks.
struct BackTree {
  std::unordered_map<std::string, std::string> parent_of;
  const ProvenanceTree* tree = nullptr;  // node payload access

  // empty string when `id` is a root
  const std::string& parent(const std::string& id) const;
};

// For each event v, maps v to the earliest event u in (ts, id) order with
// u.object_id == v.actor_id, u.ts <= v.ts and u.id != v.id. Events with no
// such u are absent (roots). Equal timestamps are eligible, so candidates
// ordered after v in the same timestamp group still count. Single pass
// after sort, O(n).
std::unordered_map<std::string, std::string> build_cp_mapping(
    const std::vector<RawEvent>& events);

ProvenanceTree build_tree(
    const std::vector<RawEvent>& events,
    const std::unordered_map<std::string, std::string>& cp,
    const LabelSet& labels);

BackTree build_back_tree(const ProvenanceTree& tree);

// JSON-lines {"id","parent","object","action","t_delta","malicious","host"},
// emitted in (ts, id) order. The host field rides along because trace
// records need it.
void dump_tree(const ProvenanceTree& tree, std::ostream& out);
ProvenanceTree load_tree_dump(std::istream& in);

}  // namespace provtrace
