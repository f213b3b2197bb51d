#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>

#include "doctest.h"
#include "provtrace/errors.hpp"
#include "provtrace/optimizer.hpp"
#include "provtrace/transformer.hpp"
#include "reference_transformer.hpp"

using namespace provtrace;

namespace {

DatasetSchema tiny_schema() { return DatasetSchema{{"A", "B"}, {"X", "Y"}}; }

ModelConfig tiny_config(const Vocabulary& vocab, std::size_t max_positions) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 16;
  cfg.dropout_rate = 0.0;
  cfg.vocab_size = vocab.size();
  cfg.max_positions = max_positions;
  return cfg;
}

Trace random_trace(const DatasetSchema& schema, std::size_t len, Rng& rng,
                   bool label) {
  Trace t;
  for (std::size_t i = 0; i < len; ++i) {
    const auto& obj = schema.objects[rng.below(schema.objects.size())];
    const auto& act = schema.actions[rng.below(schema.actions.size())];
    t.events.push_back(
        {obj + "_" + act, rng.uniform() * 3.0, "e" + std::to_string(i)});
  }
  t.malicious = label;
  return t;
}

std::vector<EmbeddedSequence> random_batch(const Vocabulary& vocab,
                                           std::size_t count,
                                           std::size_t max_length,
                                           double p_mask, Rng& rng) {
  const DatasetSchema schema = tiny_schema();
  EncodeConfig ec;
  ec.p_mask = p_mask;
  TraceConfig tc;
  tc.max_length = max_length;
  std::vector<EmbeddedSequence> batch;
  for (std::size_t i = 0; i < count; ++i) {
    // lengths stay below max_length so every sequence carries real pads
    Trace t = random_trace(schema, 1 + rng.below(max_length - 1), rng,
                           rng.bernoulli(0.5));
    batch.push_back(encode(finalize_trace(t, tc), vocab, ec, rng));
  }
  return batch;
}

}  // namespace

TEST_CASE("all-equal logits produce exactly uniform distributions") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  TransformerModel model(cfg, 42);
  model.mlm_w.value.zero();
  model.mlm_b.value.zero();
  model.cls_w.value.zero();
  model.cls_b.value.zero();

  Rng rng(1);
  auto batch = random_batch(vocab, 1, 4, 1.0, rng);
  ForwardResult fr = model.forward(batch, Mode::Eval);
  REQUIRE_FALSE(fr.seqs[0].mlm.positions.empty());
  for (std::size_t r = 0; r < fr.seqs[0].mlm.probs.rows; ++r) {
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      CHECK(fr.seqs[0].mlm.probs.at(r, c) == 1.0 / 8.0);
    }
  }
  CHECK(fr.seqs[0].class_probs[0] == 0.5);
  CHECK(fr.seqs[0].class_probs[1] == 0.5);
}

TEST_CASE("a single non-pad token attends only to itself") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  TransformerModel model(cfg, 7);
  EmbeddedSequence seq;
  seq.token_ids = {4, 0, 0, 0, 0, 0};
  seq.slot_values.assign(6, 0.0);
  seq.attention_mask = {true, false, false, false, false, false};
  seq.mlm_targets.assign(6, -1);
  ForwardResult fr = model.forward({seq}, Mode::Eval, nullptr, true);
  REQUIRE(fr.seqs[0].encoded.attention.size() ==
          cfg.n_layers * cfg.n_heads);
  for (const Tensor& a : fr.seqs[0].encoded.attention) {
    CHECK(a.at(0, 0) == 1.0);
    for (std::size_t c = 1; c < a.cols; ++c) CHECK(a.at(0, c) == 0.0);
  }
}

TEST_CASE("attention rows are distributions over non-pad keys") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 10);
  TransformerModel model(cfg, 11);
  Rng rng(3);
  auto batch = random_batch(vocab, 4, 8, 0.3, rng);
  ForwardResult fr = model.forward(batch, Mode::Eval, nullptr, true);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::size_t n = 0;
    while (n < batch[i].attention_mask.size() && batch[i].attention_mask[n]) {
      ++n;
    }
    for (const Tensor& a : fr.seqs[i].encoded.attention) {
      for (std::size_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) {
          CHECK(a.at(r, c) >= 0.0);
          if (c >= n) CHECK(a.at(r, c) == 0.0);  // pad keys get nothing
          sum += a.at(r, c);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("forward matches the straight-line reference to 1e-10") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  TransformerModel model(cfg, 2024);
  Rng rng(5);
  auto batch = random_batch(vocab, 6, 4, 0.4, rng);
  {
    // include one pad-free, full-length sequence
    EncodeConfig ec;
    ec.p_mask = 0.4;
    TraceConfig tc;
    tc.max_length = 4;
    Trace full = random_trace(tiny_schema(), 4, rng, true);
    batch.push_back(encode(finalize_trace(full, tc), vocab, ec, rng));
  }
  ForwardResult fr = model.forward(batch, Mode::Eval);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto ref = testref::reference_forward(model, batch[i]);
    for (std::size_t r = 0; r < ref.hidden.size(); ++r) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) {
        CHECK(std::fabs(fr.seqs[i].encoded.hidden.at(r, c) -
                        ref.hidden[r][c]) < 1e-10);
      }
    }
    REQUIRE(fr.seqs[i].mlm.probs.rows == ref.mlm_probs.size());
    for (std::size_t r = 0; r < ref.mlm_probs.size(); ++r) {
      for (std::size_t c = 0; c < vocab.size(); ++c) {
        CHECK(std::fabs(fr.seqs[i].mlm.probs.at(r, c) -
                        ref.mlm_probs[r][c]) < 1e-10);
      }
    }
    CHECK(std::fabs(fr.seqs[i].class_probs[0] - ref.class_probs[0]) < 1e-10);
    CHECK(std::fabs(fr.seqs[i].class_probs[1] - ref.class_probs[1]) < 1e-10);
  }
}

TEST_CASE("mlm loss: perfect predictions score zero") {
  MlmPrediction p;
  p.positions = {1, 2};
  p.target_ids = {3, 5};
  p.probs = Tensor(2, 8);
  p.probs.at(0, 3) = 1.0;
  p.probs.at(1, 5) = 1.0;
  CHECK(mlm_loss({p}) < 1e-9);
}

TEST_CASE("mlm loss: uniform predictions give mean-masked-count * ln V") {
  const std::size_t V = 8;
  auto uniform_pred = [&](std::size_t n_masked) {
    MlmPrediction p;
    p.probs = Tensor(n_masked, V);
    for (auto& v : p.probs.data) v = 1.0 / static_cast<double>(V);
    for (std::size_t j = 0; j < n_masked; ++j) {
      p.positions.push_back(j + 1);
      p.target_ids.push_back(static_cast<int>(j % V));
    }
    return p;
  };
  // one mask per sequence: exactly ln V
  CHECK(std::fabs(mlm_loss({uniform_pred(1)}) - std::log(8.0)) < 1e-12);
  // 3 and 5 masks over two sequences: mean count 4
  const double loss = mlm_loss({uniform_pred(3), uniform_pred(5)});
  CHECK(std::fabs(loss - 4.0 * std::log(8.0)) < 1e-12);
}

TEST_CASE("mlm loss matches a direct summation oracle") {
  Rng rng(9);
  std::vector<MlmPrediction> preds;
  double oracle = 0.0;
  const std::size_t V = 8;
  for (int i = 0; i < 5; ++i) {
    MlmPrediction p;
    const std::size_t nm = 1 + rng.below(4);
    p.probs = Tensor(nm, V);
    for (std::size_t r = 0; r < nm; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < V; ++c) {
        p.probs.at(r, c) = 0.05 + rng.uniform();
        sum += p.probs.at(r, c);
      }
      for (std::size_t c = 0; c < V; ++c) p.probs.at(r, c) /= sum;
      p.positions.push_back(r + 1);
      p.target_ids.push_back(static_cast<int>(rng.below(V)));
      oracle -= std::log(p.probs.at(r, static_cast<std::size_t>(
                                           p.target_ids.back())));
    }
    preds.push_back(std::move(p));
  }
  oracle /= 5.0;
  CHECK(std::fabs(mlm_loss(preds) - oracle) < 1e-12);
}

TEST_CASE("mlm loss with no masked positions is a contract violation") {
  MlmPrediction empty;
  CHECK_THROWS_AS(mlm_loss({empty}), ContractError);
}

TEST_CASE("classification loss basics") {
  // certainty on the true class scores zero
  CHECK(classification_loss({{0.0, 1.0}}, {true}, {1.0, 1.0}) == 0.0);
  // maximal uncertainty scores ln 2
  CHECK(std::fabs(classification_loss({{0.5, 0.5}}, {false}, {1.0, 1.0}) -
                  std::log(2.0)) < 1e-12);
}

TEST_CASE("classification loss: weighted mean over a mixed batch") {
  // hand computation, weights (1, 3):
  //   s0 benign    p=0.8 -> 1 * -ln 0.8
  //   s1 malicious p=0.6 -> 3 * -ln 0.6
  //   s2 malicious p=0.9 -> 3 * -ln 0.9
  //   s3 benign    p=0.5 -> 1 * -ln 0.5
  // total weight 8
  const std::vector<std::array<double, 2>> probs{
      {0.8, 0.2}, {0.4, 0.6}, {0.1, 0.9}, {0.5, 0.5}};
  const std::vector<bool> labels{false, true, true, false};
  const double want = (1.0 * -std::log(0.8) + 3.0 * -std::log(0.6) +
                       3.0 * -std::log(0.9) + 1.0 * -std::log(0.5)) /
                      8.0;
  CHECK(std::fabs(classification_loss(probs, labels, {1.0, 3.0}) - want) <
        1e-12);
}

TEST_CASE("analytic gradients match central finite differences") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  cfg.lambda_mlm = 0.5;
  cfg.class_weights = {1.0, 2.0};
  TransformerModel model(cfg, 31337);
  Rng rng(13);
  auto batch = random_batch(vocab, 3, 4, 0.5, rng);

  ForwardResult fr = model.forward(batch, Mode::Train);
  model.zero_grads();
  model.backward(batch, fr);

  auto loss_now = [&]() {
    ForwardResult f = model.forward(batch, Mode::Eval);
    return model.compute_losses(batch, f).total;
  };

  const double eps = 1e-4;
  std::size_t checked = 0;
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
      const double tol = std::max(1e-4 * std::max(std::fabs(fd),
                                                  std::fabs(an)),
                                  1e-8);
      if (std::fabs(fd - an) >= tol) {
        CAPTURE(p->name);
        CAPTURE(i);
        CHECK(std::fabs(fd - an) < tol);
      }
      ++checked;
    }
  }
  CHECK(checked > 1000);  // the whole parameter set was exercised
}

TEST_CASE("pad positions receive exactly zero gradient") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 8);
  TransformerModel model(cfg, 4);
  Rng rng(15);
  auto batch = random_batch(vocab, 2, 6, 0.5, rng);
  std::size_t max_n = 0;
  for (const auto& s : batch) {
    std::size_t n = 0;
    while (n < s.length() && s.attention_mask[n]) ++n;
    max_n = std::max(max_n, n);
  }
  REQUIRE(max_n < cfg.max_positions);  // there are genuine pad rows

  ForwardResult fr = model.forward(batch, Mode::Train);
  model.zero_grads();
  model.backward(batch, fr);
  // the pad token row and the pad-only positional rows stay untouched
  for (std::size_t j = 0; j < cfg.d_model; ++j) {
    CHECK(model.embedding.token_table.grad.at(Vocabulary::kPad, j) == 0.0);
    for (std::size_t r = max_n; r < cfg.max_positions; ++r) {
      CHECK(model.embedding.pos_table.grad.at(r, j) == 0.0);
    }
  }
}

TEST_CASE("pad content never leaks into non-pad outputs") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 8);
  TransformerModel model(cfg, 21);
  Rng rng(17);
  auto batch = random_batch(vocab, 1, 6, 0.0, rng);
  EmbeddedSequence mutated = batch[0];
  std::size_t n = 0;
  while (n < mutated.length() && mutated.attention_mask[n]) ++n;
  REQUIRE(n < mutated.length());
  for (std::size_t k = n; k < mutated.length(); ++k) {
    mutated.token_ids[k] = 4 + static_cast<int>(k % 4);  // shuffled garbage
    mutated.slot_values[k] = 0.9;
  }
  ForwardResult a = model.forward(batch, Mode::Eval);
  ForwardResult b = model.forward({mutated}, Mode::Eval);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cfg.d_model; ++c) {
      CHECK(a.seqs[0].encoded.hidden.at(r, c) ==
            b.seqs[0].encoded.hidden.at(r, c));
    }
  }
  CHECK(a.seqs[0].class_probs[1] == b.seqs[0].class_probs[1]);
}

TEST_CASE("untrained model scores near ln V per masked token") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 10);
  TransformerModel model(cfg, 99);
  Rng rng(19);
  auto batch = random_batch(vocab, 16, 8, 0.3, rng);
  ForwardResult fr = model.forward(batch, Mode::Eval);
  std::vector<MlmPrediction> preds;
  std::size_t masked = 0;
  for (auto& s : fr.seqs) {
    masked += s.mlm.positions.size();
    preds.push_back(s.mlm);
  }
  REQUIRE(masked > 0);
  const double per_token = mlm_loss(preds) * static_cast<double>(preds.size()) /
                           static_cast<double>(masked);
  const double lnv = std::log(static_cast<double>(vocab.size()));
  CHECK(std::fabs(per_token - lnv) / lnv < 0.05);
}

TEST_CASE("backward without a train forward is rejected") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  TransformerModel model(cfg, 1);
  Rng rng(23);
  auto batch = random_batch(vocab, 1, 4, 0.5, rng);
  ForwardResult fr = model.forward(batch, Mode::Eval);
  CHECK_THROWS_AS(model.backward(batch, fr), ContractError);
  ForwardResult tr = model.forward(batch, Mode::Train);
  model.backward(batch, tr);
  CHECK_THROWS_AS(model.backward(batch, tr), ContractError);  // consumed
}

TEST_CASE("non-finite activations abort naming the layer") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  TransformerModel model(cfg, 2);
  model.layers[1].ff_w2.value.at(0, 0) =
      std::numeric_limits<double>::infinity();
  Rng rng(29);
  auto batch = random_batch(vocab, 1, 4, 0.0, rng);
  try {
    model.forward(batch, Mode::Eval);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("adamw: lr 0 is the identity") {
  Param p("p", 2, 2);
  p.value.data = {1.0, -2.0, 3.0, 0.5};
  p.grad.data = {0.3, 0.1, -0.7, 0.0};
  AdamWConfig cfg;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.5;
  AdamW opt({&p}, cfg);
  opt.step();
  CHECK(p.value.data == std::vector<double>{1.0, -2.0, 3.0, 0.5});
  CHECK(p.grad.data == std::vector<double>{0.0, 0.0, 0.0, 0.0});  // cleared
}

TEST_CASE("adamw single step matches the closed form") {
  Param p("p", 1, 1);
  p.value.data = {1.0};
  p.grad.data = {0.5};
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt({&p}, cfg);
  opt.step();
  // first step: mhat = g, vhat = g^2, so the update is
  // lr * (g / (|g| + eps) + wd * theta)
  const double want =
      1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0);
  CHECK(std::fabs(p.value.data[0] - want) < 1e-15);
}

TEST_CASE("adamw aborts on non-finite gradients naming the parameter") {
  Param p("hidden.weight", 1, 1);
  p.grad.data = {std::numeric_limits<double>::quiet_NaN()};
  AdamW opt({&p}, AdamWConfig{});
  try {
    opt.step();
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("hidden.weight") != std::string::npos);
  }
}

TEST_CASE("training is bit-deterministic across identical runs") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 6);
  auto run = [&]() {
    TransformerModel model(cfg, 1234);
    AdamW opt(model.params(), AdamWConfig{});
    Rng rng(55);
    auto batch = random_batch(vocab, 8, 4, 0.3, rng);
    Rng step_rng(66);
    for (int s = 0; s < 100; ++s) {
      ForwardResult fr = model.forward(batch, Mode::Train, &step_rng);
      model.backward(batch, fr);
      opt.step();
    }
    std::vector<double> flat;
    for (Param* p : model.params()) {
      flat.insert(flat.end(), p->value.data.begin(), p->value.data.end());
    }
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("200 steps on a fixed 64-trace batch halve the loss") {
  Vocabulary vocab(tiny_schema());
  ModelConfig cfg = tiny_config(vocab, 10);
  cfg.d_model = 16;
  cfg.d_ff = 32;
  TransformerModel model(cfg, 777);
  AdamW opt(model.params(), AdamWConfig{});

  // separable synthetic batch: label 1 sequences favor B_Y tokens
  const DatasetSchema schema = tiny_schema();
  EncodeConfig ec;
  ec.p_mask = 0.15;
  TraceConfig tc;
  tc.max_length = 8;
  Rng rng(88);
  std::vector<EmbeddedSequence> batch;
  for (int i = 0; i < 64; ++i) {
    const bool label = i % 2 == 1;
    Trace t;
    for (int k = 0; k < 6; ++k) {
      const std::string token =
          label ? (rng.bernoulli(0.8) ? "B_Y" : "A_X")
                : (rng.bernoulli(0.8) ? "A_X" : "A_Y");
      t.events.push_back({token, rng.uniform(), "e"});
    }
    t.malicious = label;
    batch.push_back(encode(finalize_trace(t, tc), vocab, ec, rng));
  }

  double first = 0.0, last = 0.0;
  for (int s = 0; s < 200; ++s) {
    ForwardResult fr = model.forward(batch, Mode::Train, &rng);
    const Losses l = model.compute_losses(batch, fr);
    if (s == 0) first = l.total;
    last = l.total;
    model.backward(batch, fr);
    opt.step();
  }
  CHECK(last <= 0.5 * first);
}
