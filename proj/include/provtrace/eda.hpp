#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "provtrace/events.hpp"
#include "provtrace/provenance.hpp"
#include "provtrace/traces.hpp"

namespace provtrace {

struct FrequencyMatrix {
  std::vector<std::string> objects;  // rows
  std::vector<std::string> actions;  // cols
  std::vector<std::vector<std::size_t>> counts;
  std::size_t total = 0;

  double percentage(std::size_t obj, std::size_t act) const;
};

struct FrequencyMatrixPair {
  FrequencyMatrix benign;
  FrequencyMatrix malicious;
};

// Per-event population split by the event's own malicious flag.
FrequencyMatrixPair object_action_matrix(const ProvenanceTree& tree,
                                         const DatasetSchema& schema);

// Per-event-occurrence population split by the enclosing trace's label.
FrequencyMatrixPair object_action_matrix(const std::vector<Trace>& traces,
                                         const DatasetSchema& schema);

struct DeltaHistogram {
  std::vector<double> edges;  // strictly increasing; bins [e_i, e_{i+1})
  std::vector<std::size_t> benign;
  std::vector<std::size_t> malicious;
  std::size_t benign_outside = 0;
  std::size_t malicious_outside = 0;
  std::optional<double> benign_mean;     // absent when the class is empty
  std::optional<double> malicious_mean;
};

DeltaHistogram time_delta_histogram(const ProvenanceTree& tree,
                                    const std::vector<double>& edges);

// Joint counts over two categorical variables.
struct ContingencyTable {
  std::vector<std::string> x_values;
  std::vector<std::string> y_values;
  std::vector<std::vector<std::size_t>> counts;  // |x| rows, |y| cols

  static ContingencyTable from_pairs(
      const std::vector<std::pair<std::string, std::string>>& pairs);
  std::size_t total() const;
};

// Plug-in estimator, base-2 log; 0 * log(0/q) terms contribute 0.
double mutual_information_bits(const ContingencyTable& table);

struct MiRow {
  std::string feature;
  double mi_bits = 0.0;
};

// Binary per-event presence indicators (object == o, action == a) against
// the event's malicious flag.
std::vector<MiRow> event_feature_mi(const ProvenanceTree& tree,
                                    const DatasetSchema& schema);

// Binary per-trace "contains OBJECT_ACTION" indicators against the trace
// label.
std::vector<MiRow> trace_feature_mi(const std::vector<Trace>& traces,
                                    const DatasetSchema& schema);

void write_matrix_csv(const FrequencyMatrix& m, std::ostream& out);
void write_histogram_csv(const DeltaHistogram& h, std::ostream& out);
void write_mi_csv(const std::vector<MiRow>& rows, std::ostream& out);

}  // namespace provtrace
