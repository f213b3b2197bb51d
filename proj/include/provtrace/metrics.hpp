#pragma once

#include <cstddef>
#include <vector>

namespace provtrace {

// Malicious is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  ConfusionCounts counts;
};

// Pr = tp/(tp+fp), Rc = tp/(tp+fn), F1 = 2*Pr*Rc/(Pr+Rc).
// Degenerate conventions: Pr = 0 when tp+fp = 0, Rc = 0 when tp+fn = 0,
// F1 = 0 when Pr+Rc = 0.
MetricsReport metrics_from_counts(const ConfusionCounts& c);

MetricsReport compute_metrics(const std::vector<bool>& preds,
                              const std::vector<bool>& labels);

}  // namespace provtrace
