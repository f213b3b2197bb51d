#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "provtrace/errors.hpp"
#include "provtrace/metrics.hpp"
#include "provtrace/trainer.hpp"

using namespace provtrace;

namespace {

DatasetSchema tiny_schema() { return DatasetSchema{{"A", "B"}, {"X", "Y"}}; }

std::vector<Trace> toy_traces(std::size_t benign, std::size_t malicious,
                              std::uint64_t seed) {
  // token-separable corpus: malicious traces are B_Y heavy
  Rng rng(seed);
  std::vector<Trace> out;
  for (std::size_t i = 0; i < benign + malicious; ++i) {
    const bool label = i >= benign;
    Trace t;
    const std::size_t len = 3 + rng.below(5);
    for (std::size_t k = 0; k < len; ++k) {
      const std::string token = label ? (rng.bernoulli(0.8) ? "B_Y" : "A_X")
                                      : (rng.bernoulli(0.8) ? "A_X" : "B_X");
      t.events.push_back({token, rng.exponential(label ? 4.0 : 1.0),
                          "e" + std::to_string(i) + "-" + std::to_string(k)});
    }
    t.malicious = label;
    t.origin_event = "e" + std::to_string(i);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_CASE("metrics: direct substitution example") {
  ConfusionCounts c{98, 2, 1, 0};
  MetricsReport r = metrics_from_counts(c);
  CHECK(r.precision == 98.0 / 100.0);
  CHECK(r.recall == 98.0 / 99.0);
  CHECK(std::fabs(r.f1 - 196.0 / 199.0) < 1e-15);
  CHECK(r.accuracy == 98.0 / 101.0);
}

TEST_CASE("metrics: equal precision and recall give that F1") {
  ConfusionCounts c{19, 1, 1, 10};  // Pr = Rc = 0.95
  MetricsReport r = metrics_from_counts(c);
  CHECK(r.precision == 0.95);
  CHECK(r.recall == 0.95);
  CHECK(std::fabs(r.f1 - 0.95) < 1e-15);
}

TEST_CASE("metrics: degenerate conventions") {
  MetricsReport no_pred = metrics_from_counts({0, 0, 3, 5});
  CHECK(no_pred.precision == 0.0);
  CHECK(no_pred.recall == 0.0);
  CHECK(no_pred.f1 == 0.0);
  MetricsReport no_pos = metrics_from_counts({0, 2, 0, 5});
  CHECK(no_pos.recall == 0.0);
  CHECK(no_pos.f1 == 0.0);
  CHECK_THROWS_AS(metrics_from_counts({0, 0, 0, 0}), ContractError);
}

TEST_CASE("metrics match an independent enumeration on random vectors") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<bool> preds, labels;
    for (int i = 0; i < 500; ++i) {
      preds.push_back(rng.bernoulli(0.4));
      labels.push_back(rng.bernoulli(0.3));
    }
    MetricsReport r = compute_metrics(preds, labels);
    // independent enumeration
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      tp += (preds[i] && labels[i]) ? 1 : 0;
      fp += (preds[i] && !labels[i]) ? 1 : 0;
      fn += (!preds[i] && labels[i]) ? 1 : 0;
      tn += (!preds[i] && !labels[i]) ? 1 : 0;
    }
    CHECK(r.counts.tp == tp);
    CHECK(r.counts.fp == fp);
    CHECK(r.counts.fn == fn);
    CHECK(r.counts.tn == tn);
    const double pr = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rc = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    CHECK(r.precision == pr);
    CHECK(r.recall == rc);
    CHECK(r.accuracy == double(tp + tn) / 500.0);
    // identities
    if (pr > 0.0 && rc > 0.0) {
      CHECK(r.f1 >= std::min(pr, rc) - 1e-15);
      CHECK(r.f1 <= std::max(pr, rc) + 1e-15);
    }
  }
}

TEST_CASE("split: ratios (1,0,0) put everything in train") {
  auto traces = toy_traces(30, 10, 1);
  DataSplit s = stratified_split(traces, {1.0, 0.0, 0.0}, 7);
  CHECK(s.train.size() == 40);
  CHECK(s.val.empty());
  CHECK(s.test.empty());
}

TEST_CASE("split: stratification is exact where divisible") {
  auto traces = toy_traces(80, 20, 2);
  DataSplit s = stratified_split(traces, {0.8, 0.1, 0.1}, 7);
  auto frac = [](const std::vector<Trace>& v) {
    std::size_t m = 0;
    for (const auto& t : v) m += t.malicious ? 1 : 0;
    return double(m) / double(v.size());
  };
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
  CHECK(frac(s.train) == 0.2);
  CHECK(frac(s.val) == 0.2);
  CHECK(frac(s.test) == 0.2);
}

TEST_CASE("split: deterministic, disjoint and exhaustive") {
  auto traces = toy_traces(50, 13, 3);
  DataSplit a = stratified_split(traces, {0.6, 0.2, 0.2}, 11);
  DataSplit b = stratified_split(traces, {0.6, 0.2, 0.2}, 11);
  auto keys = [](const DataSplit& s) {
    std::vector<std::string> k;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      for (const auto& t : *part) k.push_back(t.origin_event);
    }
    return k;
  };
  CHECK(keys(a) == keys(b));
  CHECK(a.train.size() + a.val.size() + a.test.size() == traces.size());
  std::set<std::string> uniq;
  for (const auto& k : keys(a)) uniq.insert(k);
  CHECK(uniq.size() == traces.size());
}

TEST_CASE("split rejects ratios that do not sum to 1") {
  auto traces = toy_traces(5, 5, 4);
  CHECK_THROWS_AS(stratified_split(traces, {0.5, 0.1, 0.1}, 1),
                  ContractError);
}

TEST_CASE("sampling never drops malicious traces") {
  auto traces = toy_traces(100, 25, 5);
  SamplingPlan plan;
  plan.benign_target = 10;
  auto sampled = apply_sampling(traces, plan, 9);
  std::size_t benign = 0, malicious = 0;
  for (const auto& t : sampled) (t.malicious ? malicious : benign)++;
  CHECK(malicious == 25);
  CHECK(benign == 10);
  // no plan: identity
  CHECK(apply_sampling(traces, SamplingPlan{}, 9).size() == traces.size());
  // determinism
  auto again = apply_sampling(traces, plan, 9);
  REQUIRE(again.size() == sampled.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].origin_event == sampled[i].origin_event);
  }
}

TEST_CASE("zero-epoch training returns the initial model, empty history") {
  auto traces = toy_traces(40, 10, 6);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.max_length = 8;
  cfg.seed = 3;
  TrainResult r = train(traces, vocab, cfg);
  CHECK(r.history.empty());
  CHECK(r.steps == 0);
  CHECK(r.model != nullptr);
}

TEST_CASE("training on a separable corpus reaches high F1 quickly") {
  auto traces = toy_traces(120, 60, 7);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.max_length = 8;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.seed = 5;
  TrainResult r = train(traces, vocab, cfg);
  CHECK(r.history.size() == 16);  // train + val rows per epoch
  CHECK(r.test_report.f1 > 0.8);
  // run log is well-formed CSV
  std::ostringstream log;
  write_run_log(r.history, log);
  std::istringstream in(log.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,split,precision,recall,f1,accuracy,loss");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 16);
}

TEST_CASE("training requires both classes when epochs > 0") {
  auto traces = toy_traces(40, 0, 8);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.max_length = 8;
  CHECK_THROWS_AS(train(traces, vocab, cfg), ContractError);
}

TEST_CASE("lstm kind trains through the same path") {
  auto traces = toy_traces(120, 60, 9);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.model_kind = "lstm";
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.max_length = 8;
  cfg.d_model = 16;
  cfg.lstm_hidden = 16;
  cfg.optimizer.lr = 3e-3;
  cfg.seed = 10;
  TrainResult r = train(traces, vocab, cfg);
  CHECK(r.test_report.f1 > 0.7);
  CHECK(r.model->kind() == "lstm");
}

TEST_CASE("identical seeds give identical run logs") {
  auto traces = toy_traces(60, 30, 10);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.max_length = 8;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.seed = 12;
  auto run_once = [&]() {
    TrainResult r = train(traces, vocab, cfg);
    std::ostringstream log;
    write_run_log(r.history, log);
    return log.str();
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("imbalance sweep keeps malicious counts fixed") {
  auto traces = toy_traces(150, 30, 11);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.max_length = 8;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.seed = 13;
  auto rows = imbalance_sweep(traces, vocab, cfg, {1.0, 2.0});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].malicious_count == rows[1].malicious_count);
  CHECK(rows[0].benign_count < rows[1].benign_count);
}

TEST_CASE("data size sweep produces one row per fraction and model") {
  auto traces = toy_traces(100, 40, 12);
  Vocabulary vocab(tiny_schema());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.max_length = 8;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.lstm_hidden = 8;
  cfg.seed = 14;
  auto rows = data_size_sweep(traces, vocab, cfg, {0.1, 1.0},
                              {"transformer", "lstm"});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].fraction == 0.1);
  CHECK(rows[3].fraction == 1.0);
  // the 10% cell really is smaller
  CHECK(rows[0].benign_count + rows[0].malicious_count <
        rows[3].benign_count + rows[3].malicious_count);
}
