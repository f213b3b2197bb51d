#include "provtrace/provenance.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "provtrace/errors.hpp"
#include "json.hpp"

namespace provtrace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const ProvenanceNode& ProvenanceTree::node(const std::string& id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw ContractError("unknown node id '" + id + "'");
  return it->second;
}

const std::string& BackTree::parent(const std::string& id) const {
  static const std::string kNone;
  auto it = parent_of.find(id);
  return it == parent_of.end() ? kNone : it->second;
}

std::unordered_map<std::string, std::string> build_cp_mapping(
    const std::vector<RawEvent>& events) {
  std::unordered_map<std::string, std::string> cp;
  cp.reserve(events.size());
  // First event seen for each object_id, over everything strictly before
  // the current timestamp group.
  std::unordered_map<std::string, std::size_t> first_by_object;
  first_by_object.reserve(events.size());

  std::size_t group_begin = 0;
  while (group_begin < events.size()) {
    std::size_t group_end = group_begin;
    while (group_end < events.size() &&
           events[group_end].ts == events[group_begin].ts) {
      ++group_end;
    }
    // Equal-timestamp events are mutually eligible as parents, so track the
    // two earliest ids per object within the group to survive the u != v
    // exclusion.
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>>
        group_firsts;
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    for (std::size_t i = group_begin; i < group_end; ++i) {
      auto [it, inserted] =
          group_firsts.try_emplace(events[i].object_id, i, kNone);
      if (!inserted && it->second.second == kNone) it->second.second = i;
    }
    for (std::size_t i = group_begin; i < group_end; ++i) {
      const RawEvent& v = events[i];
      auto before = first_by_object.find(v.actor_id);
      if (before != first_by_object.end()) {
        cp.emplace(v.id, events[before->second].id);
        continue;
      }
      auto within = group_firsts.find(v.actor_id);
      if (within == group_firsts.end()) continue;
      std::size_t u = within->second.first;
      if (u == i) u = within->second.second;  // skip self
      if (u != kNone) cp.emplace(v.id, events[u].id);
    }
    for (std::size_t i = group_begin; i < group_end; ++i) {
      first_by_object.try_emplace(events[i].object_id, i);
    }
    group_begin = group_end;
  }
  return cp;
}

ProvenanceTree build_tree(
    const std::vector<RawEvent>& events,
    const std::unordered_map<std::string, std::string>& cp,
    const LabelSet& labels) {
  ProvenanceTree tree;
  tree.nodes.reserve(events.size());
  tree.order.reserve(events.size());
  for (const RawEvent& e : events) {
    ProvenanceNode n;
    n.id = e.id;
    n.object = e.object;
    n.action = e.action;
    n.timestamp = e.ts;
    n.host = e.host;
    n.malicious = labels.contains(e.id);
    tree.nodes.emplace(e.id, std::move(n));
    tree.order.push_back(e.id);
  }
  for (const RawEvent& e : events) {
    auto it = cp.find(e.id);
    if (it == cp.end()) {
      tree.roots.push_back(e.id);
      continue;
    }
    auto parent = tree.nodes.find(it->second);
    if (parent == tree.nodes.end()) {
      throw ContractError("cp mapping references unknown id '" + it->second +
                          "'");
    }
    // events arrive in (ts, id) order, so children stay ordered by child
    // timestamp
    parent->second.children.push_back(e.id);
    tree.nodes[e.id].time_delta = e.ts - parent->second.timestamp;
  }
  return tree;
}

BackTree build_back_tree(const ProvenanceTree& tree) {
  BackTree back;
  back.tree = &tree;
  back.parent_of.reserve(tree.nodes.size());
  for (const auto& [id, node] : tree.nodes) {
    for (const auto& child : node.children) {
      back.parent_of.emplace(child, id);
    }
  }
  return back;
}

void dump_tree(const ProvenanceTree& tree, std::ostream& out) {
  BackTree back = build_back_tree(tree);
  for (const auto& id : tree.order) {
    const ProvenanceNode& n = tree.node(id);
    ordered_json j;
    j["id"] = n.id;
    const std::string& p = back.parent(id);
    if (p.empty()) {
      j["parent"] = nullptr;
    } else {
      j["parent"] = p;
    }
    j["object"] = n.object;
    j["action"] = n.action;
    j["t_delta"] = n.time_delta;
    j["malicious"] = n.malicious;
    j["host"] = n.host;
    out << j.dump() << '\n';
  }
}

ProvenanceTree load_tree_dump(std::istream& in) {
  ProvenanceTree tree;
  std::vector<std::pair<std::string, std::string>> edges;  // child -> parent
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ContractError("tree dump line " + std::to_string(line_no) +
                          ": invalid JSON");
    }
    ProvenanceNode n;
    try {
      n.id = j.at("id").get<std::string>();
      n.object = j.at("object").get<std::string>();
      n.action = j.at("action").get<std::string>();
      n.time_delta = j.at("t_delta").get<double>();
      n.malicious = j.at("malicious").get<bool>();
      n.host = j.value("host", std::string{});
      if (!j.at("parent").is_null()) {
        edges.emplace_back(n.id, j["parent"].get<std::string>());
      } else {
        tree.roots.push_back(n.id);
      }
    } catch (const json::exception& ex) {
      throw ContractError("tree dump line " + std::to_string(line_no) + ": " +
                          ex.what());
    }
    tree.order.push_back(n.id);
    tree.nodes.emplace(n.id, std::move(n));
  }
  // Edges arrive in the dump's (ts, id) line order, which keeps children
  // lists ordered by child timestamp. Absolute timestamps are not stored;
  // downstream consumers only need deltas.
  for (auto& [child, parent] : edges) {
    auto it = tree.nodes.find(parent);
    if (it == tree.nodes.end()) {
      throw ContractError("tree dump: parent '" + parent + "' of '" + child +
                          "' not present");
    }
    it->second.children.push_back(child);
  }
  return tree;
}

}  // namespace provtrace
