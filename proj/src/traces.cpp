#include "provtrace/traces.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "provtrace/errors.hpp"
#include "provtrace/rng.hpp"
#include "json.hpp"

namespace provtrace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

Trace walk_chain(const BackTree& back, const std::string& start) {
  const ProvenanceTree& tree = *back.tree;
  Trace t;
  t.origin_event = start;
  t.host = tree.node(start).host;
  std::string cur = start;
  while (!cur.empty()) {
    const ProvenanceNode& n = tree.node(cur);
    TraceEvent ev;
    ev.token = n.object + "_" + n.action;
    ev.time_delta = n.time_delta;
    ev.event_id = n.id;
    t.events.insert(t.events.begin(), std::move(ev));  // add to front
    t.malicious = t.malicious || n.malicious;
    cur = back.parent(cur);
  }
  return t;
}

}  // namespace

std::vector<Trace> generate_traces(const BackTree& back,
                                   const TraceConfig& cfg) {
  if (cfg.min_length > cfg.max_length || cfg.min_length == 0) {
    throw ContractError("trace config: require 1 <= min_length <= max_length");
  }
  const ProvenanceTree& tree = *back.tree;
  std::vector<Trace> out;

  if (!cfg.per_event_start) {
    for (const auto& id : tree.order) {
      if (tree.node(id).children.empty()) {
        Trace t = walk_chain(back, id);
        if (t.events.size() >= cfg.min_length) out.push_back(std::move(t));
      }
    }
  } else {
    Rng rng(cfg.seed);
    std::vector<std::string> pool = tree.order;  // (ts, id) order
    std::unordered_set<std::string> consumed;
    consumed.reserve(pool.size());
    std::size_t remaining = pool.size();
    while (remaining > 0) {
      const std::size_t j = rng.below(remaining);
      std::swap(pool[j], pool[remaining - 1]);
      const std::string start = pool[--remaining];
      if (consumed.count(start)) continue;
      Trace t = walk_chain(back, start);
      for (const auto& ev : t.events) consumed.insert(ev.event_id);
      if (t.events.size() >= cfg.min_length) out.push_back(std::move(t));
    }
  }

  std::sort(out.begin(), out.end(), [](const Trace& a, const Trace& b) {
    return a.origin_event < b.origin_event;
  });
  return out;
}

Trace finalize_trace(Trace t, const TraceConfig& cfg) {
  if (t.events.empty()) throw ContractError("finalize_trace: empty trace");
  if (t.events.size() > cfg.max_length) {
    t.events.erase(t.events.begin(),
                   t.events.end() - static_cast<long>(cfg.max_length));
  }
  while (t.events.size() < cfg.max_length) {
    t.events.push_back(TraceEvent{kPadToken, std::nullopt, {}});
  }
  return t;
}

bool label_trace(const Trace& t, const LabelSet& labels) {
  for (const auto& ev : t.events) {
    if (!ev.is_pad() && labels.contains(ev.event_id)) return true;
  }
  return false;
}

void write_traces(const std::vector<Trace>& traces, std::ostream& out) {
  for (const Trace& t : traces) {
    ordered_json j;
    json tokens = json::array();
    json deltas = json::array();
    for (const auto& ev : t.events) {
      tokens.push_back(ev.token);
      if (ev.time_delta) {
        deltas.push_back(*ev.time_delta);
      } else {
        deltas.push_back(nullptr);
      }
    }
    j["tokens"] = std::move(tokens);
    j["deltas"] = std::move(deltas);
    j["label"] = t.malicious ? 1 : 0;
    j["origin"] = t.origin_event;
    j["host"] = t.host;
    out << j.dump() << '\n';
  }
}

std::vector<Trace> read_traces(std::istream& in) {
  std::vector<Trace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ContractError("trace file line " + std::to_string(line_no) +
                          ": invalid JSON");
    }
    try {
      Trace t;
      const auto& tokens = j.at("tokens");
      const auto& deltas = j.at("deltas");
      if (tokens.size() != deltas.size()) {
        throw ContractError("trace file line " + std::to_string(line_no) +
                            ": tokens/deltas length mismatch");
      }
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        TraceEvent ev;
        ev.token = tokens[i].get<std::string>();
        if (!deltas[i].is_null()) ev.time_delta = deltas[i].get<double>();
        t.events.push_back(std::move(ev));
      }
      t.malicious = j.at("label").get<int>() != 0;
      t.origin_event = j.value("origin", std::string{});
      t.host = j.value("host", std::string{});
      traces.push_back(std::move(t));
    } catch (const json::exception& ex) {
      throw ContractError("trace file line " + std::to_string(line_no) + ": " +
                          ex.what());
    }
  }
  return traces;
}

}  // namespace provtrace
