#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_set>
#include <vector>

namespace provtrace {

// One normalized log record. Dataset-specific formats are converted to this
// shape upstream; everything downstream only sees these fields.
struct RawEvent {
  std::string id;
  std::string actor_id;
  std::string object_id;
  std::string object;
  std::string action;
  double ts = 0.0;  // seconds since epoch
  std::string host;

  bool operator==(const RawEvent&) const = default;
};

// Closed sets of object and action names declared per dataset.
struct DatasetSchema {
  std::vector<std::string> objects;
  std::vector<std::string> actions;

  bool has_object(const std::string& name) const;
  bool has_action(const std::string& name) const;

  // Throws ContractError on empty lists, duplicates, or '_' in object names
  // (object-action tokens are joined with '_').
  void validate() const;
};

struct LabelSet {
  std::unordered_set<std::string> malicious_event_ids;
  std::size_t duplicates_seen = 0;

  bool contains(const std::string& id) const {
    return malicious_event_ids.count(id) != 0;
  }
};

struct ParseIssue {
  std::size_t line_no = 0;
  std::string message;
};

struct ParseResult {
  std::vector<RawEvent> events;  // sorted by (ts, id)
  std::vector<ParseIssue> issues;
};

// Parses JSON-lines events, validates against the schema, and returns them
// sorted ascending by timestamp with ties broken by id. Malformed lines are
// collected as issues when lenient, otherwise thrown. Unknown object/action
// names and duplicate ids always throw.
ParseResult parse_events(std::istream& in, const DatasetSchema& schema,
                         bool lenient = false);

// One id per line, or JSON-lines {"id": ...}; auto-detected from the first
// non-empty line. Duplicates are counted, empty id lines skipped.
LabelSet parse_labels(std::istream& in);

// Canonical serialization; parse_events(serialize_events(e)) == e.
void serialize_events(const std::vector<RawEvent>& events, std::ostream& out);

DatasetSchema load_schema(std::istream& in);
void save_schema(const DatasetSchema& schema, std::ostream& out);

// OpTC-like default: 4 objects x 8 actions = 32 pairs.
DatasetSchema optc_schema();

}  // namespace provtrace
