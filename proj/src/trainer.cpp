#include "provtrace/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "provtrace/errors.hpp"
#include "json.hpp"

namespace provtrace {

using nlohmann::json;

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::vector<Trace> finalize_all(const std::vector<Trace>& traces,
                                std::size_t max_length) {
  TraceConfig tc;
  tc.max_length = max_length;
  std::vector<Trace> out;
  out.reserve(traces.size());
  for (const Trace& t : traces) out.push_back(finalize_trace(t, tc));
  return out;
}

DataSplit stratified_split(const std::vector<Trace>& traces,
                           const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ContractError("split ratios must sum to 1");
  }
  DataSplit out;
  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (traces[i].malicious == (cls == 1)) idx.push_back(i);
    }
    shuffle_indices(idx, rng);
    // largest-remainder allocation keeps partitions exhaustive
    const std::size_t n = idx.size();
    std::size_t n_train = static_cast<std::size_t>(ratios.train * n);
    std::size_t n_val = static_cast<std::size_t>(ratios.val * n);
    if (n_train + n_val > n) n_val = n - n_train;
    for (std::size_t i = 0; i < n; ++i) {
      const Trace& t = traces[idx[i]];
      if (i < n_train) {
        out.train.push_back(t);
      } else if (i < n_train + n_val) {
        out.val.push_back(t);
      } else {
        out.test.push_back(t);
      }
    }
  }
  return out;
}

std::vector<Trace> apply_sampling(const std::vector<Trace>& traces,
                                  const SamplingPlan& plan,
                                  std::uint64_t seed) {
  if (!plan.benign_target) return traces;
  std::vector<std::size_t> benign;
  std::vector<Trace> out;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].malicious) {
      out.push_back(traces[i]);  // malicious traces are never dropped
    } else {
      benign.push_back(i);
    }
  }
  const std::size_t target = std::min(*plan.benign_target, benign.size());
  Rng rng(seed);
  shuffle_indices(benign, rng);
  benign.resize(target);
  std::sort(benign.begin(), benign.end());  // keep original relative order
  for (std::size_t i : benign) out.push_back(traces[i]);
  return out;
}

namespace {

class TransformerClassifier final : public SequenceClassifier {
 public:
  TransformerClassifier(const ModelConfig& mc, std::uint64_t seed)
      : model_(mc, seed) {}

  std::vector<std::array<double, 2>> predict(
      const std::vector<EmbeddedSequence>& batch) const override {
    ForwardResult fr = model_.forward(batch, Mode::Eval);
    std::vector<std::array<double, 2>> out;
    out.reserve(fr.seqs.size());
    for (const auto& s : fr.seqs) out.push_back(s.class_probs);
    return out;
  }

  double train_batch(const std::vector<EmbeddedSequence>& batch,
                     Rng& rng) override {
    ForwardResult fr = model_.forward(batch, Mode::Train, &rng);
    const Losses losses = model_.compute_losses(batch, fr);
    model_.backward(batch, fr);
    last_probs_.clear();
    for (const auto& s : fr.seqs) last_probs_.push_back(s.class_probs);
    return losses.total;
  }

  std::vector<Param*> parameters() override { return model_.params(); }
  std::string kind() const override { return "transformer"; }

  std::string config_json() const override {
    const ModelConfig& c = model_.config();
    json j;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["n_layers"] = c.n_layers;
    j["d_ff"] = c.d_ff;
    j["dropout"] = c.dropout_rate;
    j["vocab_size"] = c.vocab_size;
    j["max_positions"] = c.max_positions;
    j["lambda_mlm"] = c.lambda_mlm;
    j["class_weights"] = c.class_weights;
    return j.dump();
  }

  TransformerModel model_;
  std::vector<std::array<double, 2>> last_probs_;
};

class LstmClassifier final : public SequenceClassifier {
 public:
  LstmClassifier(const LstmConfig& lc, std::uint64_t seed)
      : model_(lc, seed) {}

  std::vector<std::array<double, 2>> predict(
      const std::vector<EmbeddedSequence>& batch) const override {
    LstmForwardResult fr = model_.forward(batch, Mode::Eval);
    return fr.class_probs;
  }

  double train_batch(const std::vector<EmbeddedSequence>& batch,
                     Rng&) override {
    LstmForwardResult fr = model_.forward(batch, Mode::Train);
    const double loss = model_.compute_loss(batch, fr);
    model_.backward(batch, fr);
    last_probs_ = fr.class_probs;
    return loss;
  }

  std::vector<Param*> parameters() override { return model_.params(); }
  std::string kind() const override { return "lstm"; }

  std::string config_json() const override {
    const LstmConfig& c = model_.config();
    json j;
    j["hidden_size"] = c.hidden_size;
    j["embed_dim"] = c.embed_dim;
    j["vocab_size"] = c.vocab_size;
    j["max_positions"] = c.max_positions;
    j["class_weights"] = c.class_weights;
    return j.dump();
  }

  LstmModel model_;
  std::vector<std::array<double, 2>> last_probs_;
};

std::vector<std::array<double, 2>> last_train_probs(
    const SequenceClassifier& c) {
  if (auto* t = dynamic_cast<const TransformerClassifier*>(&c)) {
    return t->last_probs_;
  }
  return dynamic_cast<const LstmClassifier&>(c).last_probs_;
}

EncodeConfig encode_config(const TrainConfig& cfg, bool training) {
  EncodeConfig ec;
  ec.temporal.window_seconds = cfg.window_seconds;
  ec.use_temporal = cfg.use_temporal;
  const bool masked = training && cfg.model_kind == "transformer";
  ec.p_mask = masked ? cfg.p_mask : 0.0;
  return ec;
}

std::vector<EmbeddedSequence> encode_batch(const std::vector<Trace>& traces,
                                           const std::vector<std::size_t>& idx,
                                           std::size_t begin, std::size_t end,
                                           const Vocabulary& vocab,
                                           const EncodeConfig& ec, Rng& rng) {
  std::vector<EmbeddedSequence> batch;
  batch.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    batch.push_back(encode(traces[idx[i]], vocab, ec, rng));
  }
  return batch;
}

}  // namespace

std::unique_ptr<SequenceClassifier> make_classifier(const TrainConfig& cfg,
                                                    const Vocabulary& vocab) {
  if (cfg.model_kind == "transformer") {
    ModelConfig mc;
    mc.d_model = cfg.d_model;
    mc.n_heads = cfg.n_heads;
    mc.n_layers = cfg.n_layers;
    mc.d_ff = cfg.d_ff;
    mc.dropout_rate = cfg.dropout;
    mc.vocab_size = vocab.size();
    mc.max_positions = cfg.max_length + 2;
    mc.lambda_mlm = cfg.lambda_mlm;
    mc.class_weights = cfg.class_weights;
    return std::make_unique<TransformerClassifier>(mc, cfg.seed);
  }
  if (cfg.model_kind == "lstm") {
    LstmConfig lc;
    lc.hidden_size = cfg.lstm_hidden;
    lc.embed_dim = cfg.d_model;
    lc.vocab_size = vocab.size();
    lc.max_positions = cfg.max_length + 2;
    lc.class_weights = cfg.class_weights;
    return std::make_unique<LstmClassifier>(lc, cfg.seed);
  }
  throw ContractError("unknown model kind '" + cfg.model_kind + "'");
}

MetricsReport evaluate(const SequenceClassifier& model,
                       const std::vector<Trace>& finalized,
                       const Vocabulary& vocab, const TrainConfig& cfg,
                       std::vector<bool>* out_preds) {
  const EncodeConfig ec = encode_config(cfg, /*training=*/false);
  Rng rng(0);  // unused at p_mask = 0
  std::vector<bool> preds, labels;
  preds.reserve(finalized.size());
  std::vector<std::size_t> idx(finalized.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t b = 0; b < finalized.size(); b += cfg.batch_size) {
    const std::size_t e = std::min(finalized.size(), b + cfg.batch_size);
    auto batch = encode_batch(finalized, idx, b, e, vocab, ec, rng);
    auto probs = model.predict(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      preds.push_back(probs[i][1] > probs[i][0]);
      labels.push_back(batch[i].label);
    }
  }
  if (out_preds) *out_preds = preds;
  return compute_metrics(preds, labels);
}

TrainResult train(const std::vector<Trace>& traces, const Vocabulary& vocab,
                  const TrainConfig& cfg) {
  TrainResult result;
  const std::vector<Trace> finalized = finalize_all(traces, cfg.max_length);
  result.split = stratified_split(finalized, cfg.ratios, cfg.seed);
  std::vector<Trace> train_set =
      apply_sampling(result.split.train, cfg.sampling, cfg.seed + 1);

  if (cfg.epochs > 0) {
    bool has_benign = false, has_malicious = false;
    for (const Trace& t : train_set) (t.malicious ? has_malicious : has_benign) = true;
    if (!has_benign || !has_malicious) {
      throw ContractError("train partition must contain both classes");
    }
  }

  result.model = make_classifier(cfg, vocab);
  AdamW opt(result.model->parameters(), cfg.optimizer);
  Rng run_rng(cfg.seed ^ 0x7261696e5f726e67ULL);
  const EncodeConfig train_ec = encode_config(cfg, /*training=*/true);

  // snapshot of the best validation-F1 parameters
  std::vector<Tensor> best;
  auto snapshot = [&]() {
    best.clear();
    for (Param* p : result.model->parameters()) best.push_back(p->value);
  };
  snapshot();

  std::vector<std::size_t> idx(train_set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(idx, run_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    ConfusionCounts train_counts;
    for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(idx.size(), b + cfg.batch_size);
      auto batch =
          encode_batch(train_set, idx, b, e, vocab, train_ec, run_rng);
      loss_sum += result.model->train_batch(batch, run_rng);
      opt.step();
      ++batches;
      const auto probs = last_train_probs(*result.model);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const bool pred = probs[i][1] > probs[i][0];
        if (batch[i].label) {
          pred ? ++train_counts.tp : ++train_counts.fn;
        } else {
          pred ? ++train_counts.fp : ++train_counts.tn;
        }
      }
    }

    EpochRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.report = metrics_from_counts(train_counts);
    train_row.loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    result.history.push_back(train_row);

    if (!result.split.val.empty()) {
      std::vector<bool> val_preds;
      EpochRow val_row;
      val_row.epoch = epoch;
      val_row.split = "val";
      val_row.report =
          evaluate(*result.model, result.split.val, vocab, cfg, &val_preds);
      // validation loss: class-weighted NLL of the eval-mode predictions
      {
        const EncodeConfig ec = encode_config(cfg, false);
        Rng tmp(0);
        std::vector<std::size_t> vidx(result.split.val.size());
        for (std::size_t i = 0; i < vidx.size(); ++i) vidx[i] = i;
        double nll = 0.0;
        std::vector<std::array<double, 2>> probs;
        std::vector<bool> labels;
        for (std::size_t b = 0; b < vidx.size(); b += cfg.batch_size) {
          const std::size_t e = std::min(vidx.size(), b + cfg.batch_size);
          auto batch = encode_batch(result.split.val, vidx, b, e, vocab, ec,
                                    tmp);
          auto p = result.model->predict(batch);
          for (std::size_t i = 0; i < batch.size(); ++i) {
            probs.push_back(p[i]);
            labels.push_back(batch[i].label);
          }
        }
        nll = classification_loss(probs, labels, cfg.class_weights);
        val_row.loss = nll;
      }
      result.history.push_back(val_row);

      if (val_row.report.f1 > result.best_val_f1 ||
          (result.best_epoch == 0 && epoch == 1)) {
        result.best_val_f1 = val_row.report.f1;
        result.best_epoch = epoch;
        snapshot();
      }
    } else {
      // no validation data: last epoch wins
      result.best_epoch = epoch;
      snapshot();
    }
  }
  result.steps = opt.steps_taken();

  // restore the retained snapshot
  {
    auto params = result.model->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i]->value = best[i];
    }
  }
  if (!result.split.test.empty()) {
    result.test_report =
        evaluate(*result.model, result.split.test, vocab, cfg);
  }
  return result;
}

std::vector<SweepRow> data_size_sweep(const std::vector<Trace>& traces,
                                      const Vocabulary& vocab,
                                      const TrainConfig& base,
                                      const std::vector<double>& fractions,
                                      const std::vector<std::string>& kinds) {
  std::vector<SweepRow> rows;
  for (double frac : fractions) {
    if (!(frac > 0.0) || frac > 1.0) {
      throw ContractError("sweep fractions must lie in (0, 1]");
    }
    for (const std::string& kind : kinds) {
      TrainConfig cfg = base;
      cfg.model_kind = kind;
      // shrink the train partition only, stratified, seeded
      const std::vector<Trace> finalized =
          finalize_all(traces, cfg.max_length);
      DataSplit split = stratified_split(finalized, cfg.ratios, cfg.seed);
      std::vector<Trace> sub;
      {
        Rng rng(cfg.seed ^ 0x66726163ULL);
        for (int cls = 0; cls < 2; ++cls) {
          std::vector<std::size_t> idx;
          for (std::size_t i = 0; i < split.train.size(); ++i) {
            if (split.train[i].malicious == (cls == 1)) idx.push_back(i);
          }
          shuffle_indices(idx, rng);
          const std::size_t keep = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::floor(frac * idx.size())));
          idx.resize(std::min(keep, idx.size()));
          std::sort(idx.begin(), idx.end());
          for (std::size_t i : idx) sub.push_back(split.train[i]);
        }
      }
      // train on the subsample with the shared budget; test split fixed
      TrainConfig run_cfg = cfg;
      run_cfg.ratios = {1.0, 0.0, 0.0};
      run_cfg.sampling = {};
      std::vector<Trace> train_and_val = sub;
      TrainResult tr = train(train_and_val, vocab, run_cfg);
      MetricsReport test = evaluate(*tr.model, split.test, vocab, run_cfg);
      SweepRow row;
      row.model_kind = kind;
      row.fraction = frac;
      for (const Trace& t : sub) {
        (t.malicious ? row.malicious_count : row.benign_count)++;
      }
      row.f1 = test.f1;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<SweepRow> imbalance_sweep(const std::vector<Trace>& traces,
                                      const Vocabulary& vocab,
                                      const TrainConfig& base,
                                      const std::vector<double>& multipliers) {
  std::vector<SweepRow> rows;
  for (double mult : multipliers) {
    if (!(mult > 0.0)) throw ContractError("multipliers must be positive");
    TrainConfig cfg = base;
    const std::vector<Trace> finalized = finalize_all(traces, cfg.max_length);
    DataSplit split = stratified_split(finalized, cfg.ratios, cfg.seed);
    std::size_t malicious = 0;
    for (const Trace& t : split.train) malicious += t.malicious ? 1 : 0;
    cfg.sampling.benign_target =
        static_cast<std::size_t>(std::llround(mult * malicious));
    TrainResult tr = train(traces, vocab, cfg);
    std::size_t train_malicious = 0, train_benign = 0;
    {
      auto sampled =
          apply_sampling(tr.split.train, cfg.sampling, cfg.seed + 1);
      for (const Trace& t : sampled) {
        (t.malicious ? train_malicious : train_benign)++;
      }
    }
    if (train_malicious != malicious) {
      throw ContractError("downsampling altered the malicious trace count");
    }
    SweepRow row;
    row.model_kind = cfg.model_kind;
    row.benign_count = train_benign;
    row.malicious_count = train_malicious;
    row.f1 = tr.test_report.f1;
    rows.push_back(row);
  }
  return rows;
}

void write_run_log(const std::vector<EpochRow>& history, std::ostream& out) {
  out << "epoch,split,precision,recall,f1,accuracy,loss\n";
  for (const auto& row : history) {
    out << row.epoch << ',' << row.split << ',' << fmt(row.report.precision)
        << ',' << fmt(row.report.recall) << ',' << fmt(row.report.f1) << ','
        << fmt(row.report.accuracy) << ',' << fmt(row.loss) << '\n';
  }
}

void write_metrics_csv(const MetricsReport& r, std::ostream& out) {
  out << "precision,recall,f1,accuracy,tp,fp,fn,tn\n";
  out << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.f1) << ','
      << fmt(r.accuracy) << ',' << r.counts.tp << ',' << r.counts.fp << ','
      << r.counts.fn << ',' << r.counts.tn << '\n';
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "model,fraction,benign_count,malicious_count,f1\n";
  for (const auto& r : rows) {
    out << r.model_kind << ',' << fmt(r.fraction) << ',' << r.benign_count
        << ',' << r.malicious_count << ',' << fmt(r.f1) << '\n';
  }
}

}  // namespace provtrace
