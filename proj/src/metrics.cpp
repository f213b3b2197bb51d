#include "provtrace/metrics.hpp"

#include "provtrace/errors.hpp"

namespace provtrace {

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw ContractError("metrics over an empty population");
  MetricsReport r;
  r.counts = c;
  const double tp = static_cast<double>(c.tp);
  r.precision = (c.tp + c.fp) == 0 ? 0.0 : tp / static_cast<double>(c.tp + c.fp);
  r.recall = (c.tp + c.fn) == 0 ? 0.0 : tp / static_cast<double>(c.tp + c.fn);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  r.accuracy = static_cast<double>(c.tp + c.tn) /
               static_cast<double>(c.total());
  return r;
}

MetricsReport compute_metrics(const std::vector<bool>& preds,
                              const std::vector<bool>& labels) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw ContractError("compute_metrics: empty or misaligned inputs");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i]) {
      preds[i] ? ++c.tp : ++c.fn;
    } else {
      preds[i] ? ++c.fp : ++c.tn;
    }
  }
  return metrics_from_counts(c);
}

}  // namespace provtrace
