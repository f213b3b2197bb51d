#include "provtrace/events.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "provtrace/errors.hpp"
#include "json.hpp"

namespace provtrace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool DatasetSchema::has_object(const std::string& name) const {
  return std::find(objects.begin(), objects.end(), name) != objects.end();
}

bool DatasetSchema::has_action(const std::string& name) const {
  return std::find(actions.begin(), actions.end(), name) != actions.end();
}

void DatasetSchema::validate() const {
  if (objects.empty() || actions.empty()) {
    throw ContractError("schema: objects and actions must be non-empty");
  }
  auto check_dups = [](const std::vector<std::string>& v, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& s : v) {
      if (!seen.insert(s).second) {
        throw ContractError(std::string("schema: duplicate ") + what + " '" +
                            s + "'");
      }
    }
  };
  check_dups(objects, "object");
  check_dups(actions, "action");
  for (const auto& o : objects) {
    if (o.find('_') != std::string::npos) {
      throw ContractError("schema: object name '" + o +
                          "' may not contain '_'");
    }
  }
}

namespace {

RawEvent event_from_json(const json& j, std::size_t line_no) {
  RawEvent e;
  try {
    e.id = j.at("id").get<std::string>();
    e.actor_id = j.at("actor_id").get<std::string>();
    e.object_id = j.at("object_id").get<std::string>();
    e.object = j.at("object").get<std::string>();
    e.action = j.at("action").get<std::string>();
    e.ts = j.at("ts").get<double>();
    e.host = j.at("host").get<std::string>();
  } catch (const json::exception& ex) {
    throw ContractError("line " + std::to_string(line_no) + ": " + ex.what());
  }
  if (e.id.empty()) {
    throw ContractError("line " + std::to_string(line_no) + ": empty id");
  }
  if (!std::isfinite(e.ts) || e.ts < 0.0) {
    throw ContractError("line " + std::to_string(line_no) +
                        ": timestamp must be finite and >= 0");
  }
  return e;
}

}  // namespace

ParseResult parse_events(std::istream& in, const DatasetSchema& schema,
                         bool lenient) {
  schema.validate();
  ParseResult result;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    RawEvent e;
    try {
      if (j.is_discarded()) {
        throw ContractError("line " + std::to_string(line_no) +
                            ": invalid JSON");
      }
      e = event_from_json(j, line_no);
    } catch (const ContractError& ex) {
      if (lenient) {
        result.issues.push_back({line_no, ex.what()});
        continue;
      }
      throw;
    }
    // Closed-set and uniqueness violations are data corruption, not noise;
    // they are fatal even under the lenient flag.
    if (!schema.has_object(e.object)) {
      throw ContractError("line " + std::to_string(line_no) + ": object '" +
                          e.object + "' not in schema");
    }
    if (!schema.has_action(e.action)) {
      throw ContractError("line " + std::to_string(line_no) + ": action '" +
                          e.action + "' not in schema");
    }
    if (!seen_ids.insert(e.id).second) {
      throw ContractError("line " + std::to_string(line_no) +
                          ": duplicate event id '" + e.id + "'");
    }
    result.events.push_back(std::move(e));
  }
  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const RawEvent& a, const RawEvent& b) {
                     if (a.ts != b.ts) return a.ts < b.ts;
                     return a.id < b.id;
                   });
  return result;
}

LabelSet parse_labels(std::istream& in) {
  LabelSet labels;
  std::string line;
  int mode = 0;  // 0 undecided, 1 plain ids, 2 json-lines
  while (std::getline(in, line)) {
    // trim trailing CR / surrounding spaces
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    std::string body = line.substr(start);
    if (mode == 0) mode = (body.front() == '{') ? 2 : 1;
    std::string id;
    if (mode == 2) {
      json j = json::parse(body, nullptr, false);
      if (j.is_discarded() || !j.contains("id")) continue;
      id = j["id"].get<std::string>();
    } else {
      id = body;
    }
    if (id.empty()) continue;
    if (!labels.malicious_event_ids.insert(id).second) {
      ++labels.duplicates_seen;
    }
  }
  return labels;
}

void serialize_events(const std::vector<RawEvent>& events, std::ostream& out) {
  for (const auto& e : events) {
    ordered_json j;
    j["id"] = e.id;
    j["actor_id"] = e.actor_id;
    j["object_id"] = e.object_id;
    j["object"] = e.object;
    j["action"] = e.action;
    j["ts"] = e.ts;
    j["host"] = e.host;
    out << j.dump() << '\n';
  }
}

DatasetSchema load_schema(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ContractError(std::string("schema: ") + ex.what());
  }
  DatasetSchema s;
  s.objects = j.at("objects").get<std::vector<std::string>>();
  s.actions = j.at("actions").get<std::vector<std::string>>();
  s.validate();
  return s;
}

void save_schema(const DatasetSchema& schema, std::ostream& out) {
  ordered_json j;
  j["objects"] = schema.objects;
  j["actions"] = schema.actions;
  out << j.dump(2) << '\n';
}

DatasetSchema optc_schema() {
  return DatasetSchema{
      {"PROCESS", "FILE", "FLOW", "SHELL"},
      {"CREATE", "OPEN", "READ", "MESSAGE", "MODIFY", "RENAME", "DELETE",
       "COMMAND"}};
}

}  // namespace provtrace
