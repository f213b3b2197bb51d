#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "provtrace/errors.hpp"
#include "provtrace/lstm.hpp"
#include "provtrace/optimizer.hpp"
#include "provtrace/transformer.hpp"

using namespace provtrace;

namespace {

DatasetSchema tiny_schema() { return DatasetSchema{{"A", "B"}, {"X", "Y"}}; }

LstmConfig tiny_config(const Vocabulary& vocab, std::size_t max_positions) {
  LstmConfig cfg;
  cfg.hidden_size = 5;
  cfg.embed_dim = 4;
  cfg.vocab_size = vocab.size();
  cfg.max_positions = max_positions;
  return cfg;
}

EmbeddedSequence sequence_of(const Vocabulary& vocab,
                             const std::vector<std::string>& tokens,
                             const std::vector<double>& deltas,
                             std::size_t max_length, bool label) {
  Trace t;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    t.events.push_back({tokens[i], deltas[i], "e" + std::to_string(i)});
  }
  t.malicious = label;
  TraceConfig tc;
  tc.max_length = max_length;
  EncodeConfig ec;
  ec.p_mask = 0.0;
  Rng rng(0);
  return encode(finalize_trace(t, tc), vocab, ec, rng);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("all-pad sequences are rejected") {
  Vocabulary vocab(tiny_schema());
  LstmModel model(tiny_config(vocab, 6), 1);
  EmbeddedSequence seq;
  seq.token_ids.assign(6, Vocabulary::kPad);
  seq.slot_values.assign(6, 0.0);
  seq.attention_mask.assign(6, false);
  seq.mlm_targets.assign(6, -1);
  CHECK_THROWS_AS(model.forward({seq}, Mode::Eval), ContractError);
}

TEST_CASE("hidden size 1 matches a hand-rolled scalar recurrence") {
  Vocabulary vocab(tiny_schema());
  LstmConfig cfg = tiny_config(vocab, 5);
  cfg.hidden_size = 1;
  cfg.embed_dim = 2;
  LstmModel model(cfg, 42);

  EmbeddedSequence seq =
      sequence_of(vocab, {"A_X", "B_Y", "A_Y"}, {0.0, 1.0, 2.0}, 3, false);
  LstmForwardResult fr = model.forward({seq}, Mode::Eval);

  // scalar re-computation straight from the definitions
  double h = 0.0, c = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    double x0 =
        model.embedding.token_table.value.at(
            static_cast<std::size_t>(seq.token_ids[t]), 0) +
        seq.slot_values[t] * model.embedding.slot_w.value.at(0, 0) +
        model.embedding.slot_b.value.at(0, 0);
    double x1 =
        model.embedding.token_table.value.at(
            static_cast<std::size_t>(seq.token_ids[t]), 1) +
        seq.slot_values[t] * model.embedding.slot_w.value.at(0, 1) +
        model.embedding.slot_b.value.at(0, 1);
    auto gate = [&](std::size_t g) {
      return model.bias.value.at(0, g) +
             x0 * model.w_ih.value.at(0, g) + x1 * model.w_ih.value.at(1, g) +
             h * model.w_hh.value.at(0, g);
    };
    const double ig = sigmoid(gate(0));
    const double fg = sigmoid(gate(1));
    const double gg = std::tanh(gate(2));
    const double og = sigmoid(gate(3));
    c = fg * c + ig * gg;
    h = og * std::tanh(c);
  }
  const double l0 = model.cls_w.value.at(0, 0) * h + model.cls_b.value.at(0, 0);
  const double l1 = model.cls_w.value.at(1, 0) * h + model.cls_b.value.at(0, 1);
  const double mx = std::max(l0, l1);
  const double p1 = std::exp(l1 - mx) / (std::exp(l0 - mx) + std::exp(l1 - mx));
  CHECK(std::fabs(fr.class_probs[0][1] - p1) < 1e-12);
}

TEST_CASE("lstm gradients match central finite differences") {
  Vocabulary vocab(tiny_schema());
  LstmConfig cfg = tiny_config(vocab, 6);
  cfg.class_weights = {1.0, 2.5};
  LstmModel model(cfg, 7);

  std::vector<EmbeddedSequence> batch{
      sequence_of(vocab, {"A_X", "B_Y"}, {0.0, 1.5}, 4, false),
      sequence_of(vocab, {"B_X", "A_Y", "B_Y", "A_X"}, {0.0, 1.0, 0.5, 2.0},
                  4, true),
      sequence_of(vocab, {"A_Y"}, {0.0}, 4, true)};

  LstmForwardResult fr = model.forward(batch, Mode::Train);
  model.zero_grads();
  model.backward(batch, fr);

  auto loss_now = [&]() {
    LstmForwardResult f = model.forward(batch, Mode::Eval);
    return model.compute_loss(batch, f);
  };

  const double eps = 1e-4;
  for (Param* p : model.params()) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double keep = p->value.data[i];
      p->value.data[i] = keep + eps;
      const double up = loss_now();
      p->value.data[i] = keep - eps;
      const double down = loss_now();
      p->value.data[i] = keep;
      const double fd = (up - down) / (2.0 * eps);
      const double an = p->grad.data[i];
      const double tol = std::max(
          1e-4 * std::max(std::fabs(fd), std::fabs(an)), 1e-8);
      if (std::fabs(fd - an) >= tol) {
        CAPTURE(p->name);
        CAPTURE(i);
        CHECK(std::fabs(fd - an) < tol);
      }
    }
  }
}

TEST_CASE("same seed reproduces parameters and predictions") {
  Vocabulary vocab(tiny_schema());
  LstmConfig cfg = tiny_config(vocab, 6);
  auto run = [&]() {
    LstmModel model(cfg, 99);
    AdamW opt(model.params(), AdamWConfig{});
    std::vector<EmbeddedSequence> batch{
        sequence_of(vocab, {"A_X", "B_Y"}, {0.0, 1.0}, 4, false),
        sequence_of(vocab, {"B_Y", "B_X", "A_X"}, {0.0, 2.0, 1.0}, 4, true)};
    for (int s = 0; s < 50; ++s) {
      LstmForwardResult fr = model.forward(batch, Mode::Train);
      model.backward(batch, fr);
      opt.step();
    }
    LstmForwardResult fr = model.forward(batch, Mode::Eval);
    std::vector<double> flat;
    for (Param* p : model.params()) {
      flat.insert(flat.end(), p->value.data.begin(), p->value.data.end());
    }
    flat.push_back(fr.class_probs[0][1]);
    flat.push_back(fr.class_probs[1][1]);
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("cross report: identical predictions give zero asymmetry") {
  const std::vector<bool> preds{true, false, true};
  const std::vector<bool> labels{true, true, false};
  CrossReport r = cross_classification_report(preds, preds, labels);
  CHECK(r.a_correct_b_wrong == 0);
  CHECK(r.b_correct_a_wrong == 0);
  CHECK(r.total == 3);
}

TEST_CASE("cross report: one side all-correct, the other all-wrong") {
  const std::vector<bool> labels{true, false, true, false};
  std::vector<bool> right = labels;
  std::vector<bool> wrong;
  for (bool l : labels) wrong.push_back(!l);
  CrossReport r = cross_classification_report(right, wrong, labels);
  CHECK(r.a_correct_b_wrong == 4);
  CHECK(r.b_correct_a_wrong == 0);
  CHECK(r.both_correct == 0);
  CHECK(r.both_wrong == 0);
}

TEST_CASE("cross report matches direct enumeration on random inputs") {
  Rng rng(123);
  std::vector<bool> a, b, labels;
  for (int i = 0; i < 1000; ++i) {
    a.push_back(rng.bernoulli(0.5));
    b.push_back(rng.bernoulli(0.5));
    labels.push_back(rng.bernoulli(0.5));
  }
  CrossReport r = cross_classification_report(a, b, labels);
  std::size_t ab = 0, ba = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (a[i] == labels[i] && b[i] != labels[i]) ++ab;
    if (b[i] == labels[i] && a[i] != labels[i]) ++ba;
  }
  CHECK(r.a_correct_b_wrong == ab);
  CHECK(r.b_correct_a_wrong == ba);
  CHECK(r.both_correct + r.both_wrong + ab + ba == r.total);
}

TEST_CASE("cross report rejects misaligned inputs") {
  CHECK_THROWS_AS(
      cross_classification_report({true}, {true, false}, {true, false}),
      ContractError);
}
