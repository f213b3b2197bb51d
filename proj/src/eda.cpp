#include "provtrace/eda.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "provtrace/errors.hpp"

namespace provtrace {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

FrequencyMatrix empty_matrix(const DatasetSchema& schema) {
  FrequencyMatrix m;
  m.objects = schema.objects;
  m.actions = schema.actions;
  m.counts.assign(m.objects.size(),
                  std::vector<std::size_t>(m.actions.size(), 0));
  return m;
}

void bump(FrequencyMatrix& m, const std::string& object,
          const std::string& action) {
  const auto oi = std::find(m.objects.begin(), m.objects.end(), object);
  const auto ai = std::find(m.actions.begin(), m.actions.end(), action);
  if (oi == m.objects.end() || ai == m.actions.end()) {
    throw ContractError("object-action pair outside schema: " + object + "_" +
                        action);
  }
  ++m.counts[static_cast<std::size_t>(oi - m.objects.begin())]
            [static_cast<std::size_t>(ai - m.actions.begin())];
  ++m.total;
}

}  // namespace

double FrequencyMatrix::percentage(std::size_t obj, std::size_t act) const {
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(counts[obj][act]) /
         static_cast<double>(total);
}

FrequencyMatrixPair object_action_matrix(const ProvenanceTree& tree,
                                         const DatasetSchema& schema) {
  FrequencyMatrixPair pair{empty_matrix(schema), empty_matrix(schema)};
  for (const auto& id : tree.order) {
    const ProvenanceNode& n = tree.node(id);
    bump(n.malicious ? pair.malicious : pair.benign, n.object, n.action);
  }
  return pair;
}

FrequencyMatrixPair object_action_matrix(const std::vector<Trace>& traces,
                                         const DatasetSchema& schema) {
  FrequencyMatrixPair pair{empty_matrix(schema), empty_matrix(schema)};
  for (const Trace& t : traces) {
    FrequencyMatrix& m = t.malicious ? pair.malicious : pair.benign;
    for (const TraceEvent& ev : t.events) {
      if (ev.is_pad()) continue;
      const auto us = ev.token.find('_');
      bump(m, ev.token.substr(0, us), ev.token.substr(us + 1));
    }
  }
  return pair;
}

DeltaHistogram time_delta_histogram(const ProvenanceTree& tree,
                                    const std::vector<double>& edges) {
  if (edges.size() < 2) throw ContractError("histogram needs >= 2 edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw ContractError("histogram edges must be strictly increasing");
    }
  }
  DeltaHistogram h;
  h.edges = edges;
  h.benign.assign(edges.size() - 1, 0);
  h.malicious.assign(edges.size() - 1, 0);
  double sum_b = 0.0, sum_m = 0.0;
  std::size_t n_b = 0, n_m = 0;
  for (const auto& id : tree.order) {
    const ProvenanceNode& node = tree.node(id);
    const double v = node.time_delta;
    if (node.malicious) {
      sum_m += v;
      ++n_m;
    } else {
      sum_b += v;
      ++n_b;
    }
    auto& bins = node.malicious ? h.malicious : h.benign;
    auto& outside = node.malicious ? h.malicious_outside : h.benign_outside;
    if (v < edges.front() || v >= edges.back()) {
      ++outside;
      continue;
    }
    const auto it = std::upper_bound(edges.begin(), edges.end(), v);
    bins[static_cast<std::size_t>(it - edges.begin()) - 1]++;
  }
  if (n_b > 0) h.benign_mean = sum_b / static_cast<double>(n_b);
  if (n_m > 0) h.malicious_mean = sum_m / static_cast<double>(n_m);
  return h;
}

ContingencyTable ContingencyTable::from_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  ContingencyTable t;
  std::map<std::string, std::size_t> xi, yi;
  for (const auto& [x, y] : pairs) {
    xi.emplace(x, 0);
    yi.emplace(y, 0);
  }
  for (auto& [k, v] : xi) {
    v = t.x_values.size();
    t.x_values.push_back(k);
  }
  for (auto& [k, v] : yi) {
    v = t.y_values.size();
    t.y_values.push_back(k);
  }
  t.counts.assign(t.x_values.size(),
                  std::vector<std::size_t>(t.y_values.size(), 0));
  for (const auto& [x, y] : pairs) ++t.counts[xi[x]][yi[y]];
  return t;
}

std::size_t ContingencyTable::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (std::size_t c : row) n += c;
  }
  return n;
}

double mutual_information_bits(const ContingencyTable& table) {
  const std::size_t n = table.total();
  if (n == 0) throw ContractError("mutual information over empty table");
  const std::size_t nx = table.x_values.size();
  const std::size_t ny = table.y_values.size();
  std::vector<double> px(nx, 0.0), py(ny, 0.0);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const double p = static_cast<double>(table.counts[i][j]) /
                       static_cast<double>(n);
      px[i] += p;
      py[j] += p;
    }
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      if (table.counts[i][j] == 0) continue;
      const double pxy = static_cast<double>(table.counts[i][j]) /
                         static_cast<double>(n);
      mi += pxy * std::log2(pxy / (px[i] * py[j]));
    }
  }
  return mi;
}

namespace {

std::vector<MiRow> presence_mi(
    const std::vector<std::string>& features,
    const std::vector<std::pair<std::string, bool>>& observations) {
  // observations: (feature value seen, target); one presence table per
  // feature name
  std::vector<MiRow> rows;
  for (const auto& f : features) {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(observations.size());
    for (const auto& [value, target] : observations) {
      pairs.emplace_back(value == f ? "1" : "0", target ? "1" : "0");
    }
    rows.push_back({f, mutual_information_bits(
                           ContingencyTable::from_pairs(pairs))});
  }
  return rows;
}

}  // namespace

std::vector<MiRow> event_feature_mi(const ProvenanceTree& tree,
                                    const DatasetSchema& schema) {
  std::vector<std::pair<std::string, bool>> objects, actions;
  for (const auto& id : tree.order) {
    const ProvenanceNode& n = tree.node(id);
    objects.emplace_back(n.object, n.malicious);
    actions.emplace_back(n.action, n.malicious);
  }
  std::vector<MiRow> rows = presence_mi(schema.objects, objects);
  for (auto& r : rows) r.feature = "object:" + r.feature;
  std::vector<MiRow> arows = presence_mi(schema.actions, actions);
  for (auto& r : arows) rows.push_back({"action:" + r.feature, r.mi_bits});
  return rows;
}

std::vector<MiRow> trace_feature_mi(const std::vector<Trace>& traces,
                                    const DatasetSchema& schema) {
  std::vector<MiRow> rows;
  for (const auto& obj : schema.objects) {
    for (const auto& act : schema.actions) {
      const std::string token = obj + "_" + act;
      std::vector<std::pair<std::string, std::string>> pairs;
      pairs.reserve(traces.size());
      for (const Trace& t : traces) {
        bool contains = false;
        for (const TraceEvent& ev : t.events) {
          if (ev.token == token) {
            contains = true;
            break;
          }
        }
        pairs.emplace_back(contains ? "1" : "0", t.malicious ? "1" : "0");
      }
      rows.push_back({"trace_contains:" + token,
                      mutual_information_bits(
                          ContingencyTable::from_pairs(pairs))});
    }
  }
  return rows;
}

void write_matrix_csv(const FrequencyMatrix& m, std::ostream& out) {
  out << "object";
  for (const auto& a : m.actions) out << ',' << a;
  out << ",row_metric\n";
  for (std::size_t i = 0; i < m.objects.size(); ++i) {
    out << m.objects[i];
    for (std::size_t j = 0; j < m.actions.size(); ++j) {
      out << ',' << m.counts[i][j];
    }
    out << ",count\n";
    out << m.objects[i];
    for (std::size_t j = 0; j < m.actions.size(); ++j) {
      out << ',' << fmt(m.percentage(i, j));
    }
    out << ",percent\n";
  }
}

void write_histogram_csv(const DeltaHistogram& h, std::ostream& out) {
  out << "bin_lo,bin_hi,benign,malicious\n";
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
    out << fmt(h.edges[i]) << ',' << fmt(h.edges[i + 1]) << ',' << h.benign[i]
        << ',' << h.malicious[i] << '\n';
  }
  out << "outside,," << h.benign_outside << ',' << h.malicious_outside
      << '\n';
  out << "mean,,"
      << (h.benign_mean ? fmt(*h.benign_mean) : std::string("undefined"))
      << ','
      << (h.malicious_mean ? fmt(*h.malicious_mean) : std::string("undefined"))
      << '\n';
}

void write_mi_csv(const std::vector<MiRow>& rows, std::ostream& out) {
  out << "feature,mi_bits,log_base\n";
  for (const auto& r : rows) {
    out << r.feature << ',' << fmt(r.mi_bits) << ",2\n";
  }
}

}  // namespace provtrace
