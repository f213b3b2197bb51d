#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "provtrace/lstm.hpp"
#include "provtrace/metrics.hpp"
#include "provtrace/optimizer.hpp"
#include "provtrace/traces.hpp"
#include "provtrace/transformer.hpp"
#include "provtrace/vocab.hpp"

namespace provtrace {

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DataSplit {
  std::vector<Trace> train, val, test;
};

// Stratified by label, deterministic under seed, disjoint and exhaustive.
DataSplit stratified_split(const std::vector<Trace>& traces,
                           const SplitRatios& ratios, std::uint64_t seed);

// Downsamples benign traces to `benign_target` (uniform without
// replacement, seeded); malicious traces are never touched. nullopt keeps
// everything.
struct SamplingPlan {
  std::optional<std::size_t> benign_target;
};

std::vector<Trace> apply_sampling(const std::vector<Trace>& traces,
                                  const SamplingPlan& plan,
                                  std::uint64_t seed);

// Uniform view over the two model kinds so training and evaluation code is
// shared; comparisons then isolate the model.
class SequenceClassifier {
 public:
  virtual ~SequenceClassifier() = default;
  virtual std::vector<std::array<double, 2>> predict(
      const std::vector<EmbeddedSequence>& batch) const = 0;
  // forward + backward; leaves gradients populated, returns the loss
  virtual double train_batch(const std::vector<EmbeddedSequence>& batch,
                             Rng& rng) = 0;
  virtual std::vector<Param*> parameters() = 0;
  virtual std::string kind() const = 0;
  virtual std::string config_json() const = 0;
};

struct TrainConfig {
  std::string model_kind = "transformer";  // or "lstm"
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  std::size_t max_length = 32;
  double window_seconds = 2.0;
  bool use_temporal = true;
  double p_mask = 0.15;  // transformer only; the LSTM is never masked

  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  double dropout = 0.1;
  double lambda_mlm = 0.5;
  std::size_t lstm_hidden = 64;
  std::array<double, 2> class_weights{1.0, 1.0};

  AdamWConfig optimizer;
  SplitRatios ratios;
  SamplingPlan sampling;
};

struct EpochRow {
  std::size_t epoch = 0;
  std::string split;  // "train" | "val"
  MetricsReport report;
  double loss = 0.0;
};

struct TrainResult {
  std::unique_ptr<SequenceClassifier> model;  // best-val-F1 parameters
  std::vector<EpochRow> history;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::uint64_t steps = 0;
  MetricsReport test_report;  // evaluated with the best parameters
  DataSplit split;
};

std::unique_ptr<SequenceClassifier> make_classifier(const TrainConfig& cfg,
                                                    const Vocabulary& vocab);

// Finalizes traces, splits, applies the sampling plan to the train
// partition only, and runs shuffled mini-batch epochs with dynamic masking
// (transformer). Keeps the best-validation-F1 snapshot.
TrainResult train(const std::vector<Trace>& traces, const Vocabulary& vocab,
                  const TrainConfig& cfg);

// Evaluation over already-finalized traces with eval-mode encoding.
MetricsReport evaluate(const SequenceClassifier& model,
                       const std::vector<Trace>& finalized,
                       const Vocabulary& vocab, const TrainConfig& cfg,
                       std::vector<bool>* out_preds = nullptr);

struct SweepRow {
  std::string model_kind;
  double fraction = 1.0;
  std::size_t benign_count = 0;
  std::size_t malicious_count = 0;
  double f1 = 0.0;
};

// Fig-8-style curve: per training fraction, train each model kind with an
// identical budget and record held-out F1.
std::vector<SweepRow> data_size_sweep(const std::vector<Trace>& traces,
                                      const Vocabulary& vocab,
                                      const TrainConfig& base,
                                      const std::vector<double>& fractions,
                                      const std::vector<std::string>& kinds);

// Benign-downsampling curve: benign_target = multiplier * malicious count.
std::vector<SweepRow> imbalance_sweep(const std::vector<Trace>& traces,
                                      const Vocabulary& vocab,
                                      const TrainConfig& base,
                                      const std::vector<double>& multipliers);

void write_run_log(const std::vector<EpochRow>& history, std::ostream& out);
void write_metrics_csv(const MetricsReport& r, std::ostream& out);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

std::vector<Trace> finalize_all(const std::vector<Trace>& traces,
                                std::size_t max_length);

}  // namespace provtrace
