#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "provtrace/provenance.hpp"

namespace provtrace {

inline constexpr const char* kPadToken = "[PAD]";

struct TraceEvent {
  std::string token;                 // "OBJECT_ACTION", or "[PAD]"
  std::optional<double> time_delta;  // absent for pads
  std::string event_id;              // empty for pads

  bool is_pad() const { return token == kPadToken; }
  bool operator==(const TraceEvent&) const = default;
};

struct Trace {
  std::vector<TraceEvent> events;  // root first
  bool malicious = false;
  std::string origin_event;  // the randomly drawn start
  std::string host;

  bool operator==(const Trace&) const = default;
};

struct TraceConfig {
  std::size_t max_length = 32;
  std::size_t min_length = 2;
  std::uint64_t seed = 0;
  // true: every event is a start candidate, drawn in RNG order without
  // replacement; events already emitted on some trace are consumed and
  // skipped when drawn. false: only leaves start traces, deterministically,
  // one trace per leaf.
  bool per_event_start = true;
};

// Walks leaf-to-parent chains through the back-tree and emits root-first
// traces. Traces shorter than min_length are dropped (their events still
// count as consumed). Output is canonicalized by origin event id so the
// result is independent of draw interleaving.
std::vector<Trace> generate_traces(const BackTree& back,
                                   const TraceConfig& cfg);

// Pads with trailing [PAD] events up to max_length, or keeps the last
// max_length events when over-long (the drawn leaf end is the behavior
// under scrutiny).
Trace finalize_trace(Trace t, const TraceConfig& cfg);

bool label_trace(const Trace& t, const LabelSet& labels);

// JSON-lines {"tokens":[...],"deltas":[...],"label":0|1,"origin":id,"host":h};
// deltas are null at pads.
void write_traces(const std::vector<Trace>& traces, std::ostream& out);
std::vector<Trace> read_traces(std::istream& in);

}  // namespace provtrace
