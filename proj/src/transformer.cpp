#include "provtrace/transformer.hpp"

#include <cmath>
#include <cstring>

#include "provtrace/errors.hpp"
#include "provtrace/kernels.hpp"

namespace provtrace {

namespace {

constexpr double kLnEps = 1e-5;

void softmax_row(double* x, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  for (std::size_t i = 0; i < n; ++i) x[i] /= sum;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void check_finite(const Tensor& t, std::size_t layer) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw ContractError("non-finite activation in layer " +
                          std::to_string(layer));
    }
  }
}

void colsum_into(const Tensor& m, Tensor& acc) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    kernels::axpy(1.0, m.row(r), acc.row(0), m.cols);
  }
}

// y = x * W + b over the first n rows
Tensor linear(const Tensor& x, std::size_t n, const Param& w, const Param& b) {
  Tensor y(n, w.value.cols);
  kernels::matmul(x.data.data(), w.value.data.data(), y.data.data(), n,
                  w.value.rows, w.value.cols, false);
  for (std::size_t r = 0; r < n; ++r) {
    kernels::axpy(1.0, b.value.row(0), y.row(r), y.cols);
  }
  return y;
}

struct LnCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

Tensor layer_norm(const Tensor& x, const Param& gamma, const Param& beta,
                  LnCache* cache) {
  const std::size_t n = x.rows, d = x.cols;
  Tensor y(n, d);
  if (cache) {
    cache->xhat = Tensor(n, d);
    cache->inv_std.assign(n, 0.0);
  }
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r);
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + kLnEps);
    double* yr = y.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (xr[j] - mean) * inv_std;
      yr[j] = gamma.value.at(0, j) * xhat + beta.value.at(0, j);
      if (cache) cache->xhat.at(r, j) = xhat;
    }
    if (cache) cache->inv_std[r] = inv_std;
  }
  return y;
}

// d_x from d_y given the cached normalization; accumulates dgamma/dbeta.
Tensor layer_norm_backward(const Tensor& d_y, const LnCache& cache,
                           Param& gamma, Param& beta) {
  const std::size_t n = d_y.rows, d = d_y.cols;
  Tensor d_x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dy = d_y.row(r);
    const double* xhat = cache.xhat.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dyg = dy[j] * gamma.value.at(0, j);
      m1 += dyg;
      m2 += dyg * xhat[j];
      gamma.grad.at(0, j) += dy[j] * xhat[j];
      beta.grad.at(0, j) += dy[j];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    double* dx = d_x.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double dyg = dy[j] * gamma.value.at(0, j);
      dx[j] = cache.inv_std[r] * (dyg - m1 - xhat[j] * m2);
    }
  }
  return d_x;
}

void copy_head(const Tensor& src, Tensor& dst, std::size_t head,
               std::size_t dh) {
  for (std::size_t r = 0; r < src.rows; ++r) {
    std::memcpy(dst.row(r), src.row(r) + head * dh, dh * sizeof(double));
  }
}

void add_head_back(const Tensor& src, Tensor& dst, std::size_t head,
                   std::size_t dh) {
  for (std::size_t r = 0; r < src.rows; ++r) {
    double* out = dst.row(r) + head * dh;
    const double* in = src.row(r);
    for (std::size_t j = 0; j < dh; ++j) out[j] += in[j];
  }
}

struct LayerCache {
  Tensor x_in, q, k, v;
  std::vector<Tensor> attn;  // per head, n x n
  Tensor ctx;
  Tensor drop1, drop2;  // dropout multipliers; empty when inactive
  LnCache ln1, ln2;
  Tensor out1, ff1, act;
};

struct SeqCache {
  std::size_t n = 0;
  std::vector<LayerCache> layers;
  Tensor h_masked;  // n_masked x d
};

Tensor make_dropout_mask(std::size_t rows, std::size_t cols, double rate,
                         Rng& rng) {
  Tensor m(rows, cols);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (double& v : m.data) v = rng.uniform() < keep ? scale : 0.0;
  return m;
}

void apply_mask(Tensor& t, const Tensor& mask) {
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] *= mask.data[i];
}

}  // namespace

struct BatchCache {
  std::vector<SeqCache> seqs;
  bool consumed = false;
};

ForwardResult::ForwardResult() = default;
ForwardResult::ForwardResult(ForwardResult&&) noexcept = default;
ForwardResult& ForwardResult::operator=(ForwardResult&&) noexcept = default;
ForwardResult::~ForwardResult() = default;

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 ||
      vocab_size == 0 || max_positions == 0) {
    throw ContractError("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ContractError("model config: d_model must be divisible by n_heads");
  }
  if (lambda_mlm < 0.0 || lambda_mlm > 1.0) {
    throw ContractError("model config: lambda must be in [0,1]");
  }
}

TransformerModel::TransformerModel(const ModelConfig& cfg,
                                   std::uint64_t init_seed)
    : embedding(cfg.vocab_size, cfg.d_model, cfg.max_positions, "embedding"),
      mlm_w("mlm.w", cfg.vocab_size, cfg.d_model),
      mlm_b("mlm.b", 1, cfg.vocab_size),
      cls_w("cls.w", 2, cfg.d_model),
      cls_b("cls.b", 1, 2),
      cfg_(cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  layers.reserve(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParams lp{
        {p + "attn.wq", d, d},        {p + "attn.bq", 1, d},
        {p + "attn.wk", d, d},        {p + "attn.bk", 1, d},
        {p + "attn.wv", d, d},        {p + "attn.bv", 1, d},
        {p + "attn.wo", d, d},        {p + "attn.bo", 1, d},
        {p + "ln1.gamma", 1, d},      {p + "ln1.beta", 1, d},
        {p + "ff.w1", d, cfg.d_ff},   {p + "ff.b1", 1, cfg.d_ff},
        {p + "ff.w2", cfg.d_ff, d},   {p + "ff.b2", 1, d},
        {p + "ln2.gamma", 1, d},      {p + "ln2.beta", 1, d}};
    layers.push_back(std::move(lp));
  }

  Rng rng(init_seed);
  const double sigma = 0.02;
  embedding.init(rng, sigma);
  for (auto& lp : layers) {
    for (Param* w : {&lp.wq, &lp.wk, &lp.wv, &lp.wo, &lp.ff_w1, &lp.ff_w2}) {
      for (double& v : w->value.data) v = rng.truncated_normal(sigma);
    }
    for (double& v : lp.ln1_gamma.value.data) v = 1.0;
    for (double& v : lp.ln2_gamma.value.data) v = 1.0;
  }
  for (double& v : mlm_w.value.data) v = rng.truncated_normal(sigma);
  for (double& v : cls_w.value.data) v = rng.truncated_normal(sigma);
}

std::vector<Param*> TransformerModel::params() {
  std::vector<Param*> out{&embedding.token_table, &embedding.slot_w,
                          &embedding.slot_b, &embedding.pos_table};
  for (auto& lp : layers) {
    for (Param* p :
         {&lp.wq, &lp.bq, &lp.wk, &lp.bk, &lp.wv, &lp.bv, &lp.wo, &lp.bo,
          &lp.ln1_gamma, &lp.ln1_beta, &lp.ff_w1, &lp.ff_b1, &lp.ff_w2,
          &lp.ff_b2, &lp.ln2_gamma, &lp.ln2_beta}) {
      out.push_back(p);
    }
  }
  out.push_back(&mlm_w);
  out.push_back(&mlm_b);
  out.push_back(&cls_w);
  out.push_back(&cls_b);
  return out;
}

std::vector<const Param*> TransformerModel::params() const {
  auto mut = const_cast<TransformerModel*>(this)->params();
  return {mut.begin(), mut.end()};
}

void TransformerModel::zero_grads() {
  for (Param* p : params()) p->grad.zero();
}

ForwardResult TransformerModel::forward(
    const std::vector<EmbeddedSequence>& batch, Mode mode, Rng* rng,
    bool want_attention) const {
  const std::size_t d = cfg_.d_model;
  const std::size_t heads = cfg_.n_heads;
  const std::size_t dh = d / heads;
  const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool training = mode == Mode::Train;
  const bool use_dropout = training && cfg_.dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) {
    throw ContractError("train-mode forward with dropout needs an RNG");
  }

  ForwardResult fr;
  if (training) fr.cache = std::make_unique<BatchCache>();

  for (const EmbeddedSequence& seq : batch) {
    if (seq.length() != cfg_.max_positions) {
      throw ContractError("sequence length does not match max_positions");
    }
    std::size_t n = 0;
    while (n < seq.length() && seq.attention_mask[n]) ++n;
    for (std::size_t k = n; k < seq.length(); ++k) {
      if (seq.attention_mask[k]) {
        throw ContractError("attention mask must be a true-prefix");
      }
    }
    if (n == 0) throw ContractError("sequence with no attendable positions");

    SequenceResult res;
    SeqCache sc;
    sc.n = n;

    Tensor x_full = embed(seq, embedding);
    Tensor x(n, d);
    std::memcpy(x.data.data(), x_full.data.data(), n * d * sizeof(double));

    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const LayerParams& lp = layers[l];
      LayerCache lc;
      lc.x_in = x;

      Tensor q = linear(x, n, lp.wq, lp.bq);
      Tensor k = linear(x, n, lp.wk, lp.bk);
      Tensor v = linear(x, n, lp.wv, lp.bv);

      Tensor ctx(n, d);
      std::vector<Tensor> attn_heads;
      attn_heads.reserve(heads);
      Tensor qh(n, dh), kh(n, dh), vh(n, dh);
      for (std::size_t h = 0; h < heads; ++h) {
        copy_head(q, qh, h, dh);
        copy_head(k, kh, h, dh);
        copy_head(v, vh, h, dh);
        Tensor scores(n, n);
        kernels::matmul_a_bt(qh.data.data(), kh.data.data(),
                             scores.data.data(), n, dh, n, false);
        for (double& s : scores.data) s *= alpha;
        for (std::size_t r = 0; r < n; ++r) softmax_row(scores.row(r), n);
        Tensor ctxh(n, dh);
        kernels::matmul(scores.data.data(), vh.data.data(), ctxh.data.data(),
                        n, n, dh, false);
        for (std::size_t r = 0; r < n; ++r) {
          std::memcpy(ctx.row(r) + h * dh, ctxh.row(r), dh * sizeof(double));
        }
        if (want_attention) {
          Tensor full(cfg_.max_positions, cfg_.max_positions);
          for (std::size_t r = 0; r < n; ++r) {
            std::memcpy(full.row(r), scores.row(r), n * sizeof(double));
          }
          res.encoded.attention.push_back(std::move(full));
        }
        attn_heads.push_back(std::move(scores));
      }

      Tensor attn_out = linear(ctx, n, lp.wo, lp.bo);
      if (use_dropout) {
        lc.drop1 = make_dropout_mask(n, d, cfg_.dropout_rate, *rng);
        apply_mask(attn_out, lc.drop1);
      }
      Tensor res1 = x;
      for (std::size_t i = 0; i < res1.data.size(); ++i) {
        res1.data[i] += attn_out.data[i];
      }
      Tensor out1 =
          layer_norm(res1, lp.ln1_gamma, lp.ln1_beta,
                     training ? &lc.ln1 : nullptr);

      Tensor ff1 = linear(out1, n, lp.ff_w1, lp.ff_b1);
      Tensor act(n, cfg_.d_ff);
      for (std::size_t i = 0; i < ff1.data.size(); ++i) {
        act.data[i] = gelu(ff1.data[i]);
      }
      Tensor ff2 = linear(act, n, lp.ff_w2, lp.ff_b2);
      if (use_dropout) {
        lc.drop2 = make_dropout_mask(n, d, cfg_.dropout_rate, *rng);
        apply_mask(ff2, lc.drop2);
      }
      Tensor res2 = out1;
      for (std::size_t i = 0; i < res2.data.size(); ++i) {
        res2.data[i] += ff2.data[i];
      }
      Tensor out2 =
          layer_norm(res2, lp.ln2_gamma, lp.ln2_beta,
                     training ? &lc.ln2 : nullptr);
      check_finite(out2, l);

      if (training) {
        lc.q = std::move(q);
        lc.k = std::move(k);
        lc.v = std::move(v);
        lc.attn = std::move(attn_heads);
        lc.ctx = std::move(ctx);
        lc.out1 = std::move(out1);
        lc.ff1 = std::move(ff1);
        lc.act = std::move(act);
        sc.layers.push_back(std::move(lc));
      }
      x = std::move(out2);
    }

    res.encoded.hidden = Tensor(cfg_.max_positions, d);
    std::memcpy(res.encoded.hidden.data.data(), x.data.data(),
                n * d * sizeof(double));

    // MLM head at masked positions
    std::vector<std::size_t> mpos;
    for (std::size_t kpos = 0; kpos < seq.length(); ++kpos) {
      if (seq.mlm_targets[kpos] >= 0) mpos.push_back(kpos);
    }
    if (!mpos.empty()) {
      const std::size_t nm = mpos.size();
      Tensor hm(nm, d);
      for (std::size_t i = 0; i < nm; ++i) {
        if (mpos[i] >= n) throw ContractError("masked position beyond pads");
        std::memcpy(hm.row(i), x.row(mpos[i]), d * sizeof(double));
      }
      Tensor logits(nm, cfg_.vocab_size);
      kernels::matmul_a_bt(hm.data.data(), mlm_w.value.data.data(),
                           logits.data.data(), nm, d, cfg_.vocab_size, false);
      for (std::size_t i = 0; i < nm; ++i) {
        kernels::axpy(1.0, mlm_b.value.row(0), logits.row(i),
                      cfg_.vocab_size);
        softmax_row(logits.row(i), cfg_.vocab_size);
      }
      res.mlm.positions = mpos;
      for (std::size_t p : mpos) res.mlm.target_ids.push_back(
          seq.mlm_targets[p]);
      res.mlm.probs = std::move(logits);
      if (training) sc.h_masked = std::move(hm);
    }

    // classification head on h_[DTC]
    double clogits[2];
    for (int c = 0; c < 2; ++c) {
      clogits[c] = kernels::dot(cls_w.value.row(c), x.row(0), d) +
                   cls_b.value.at(0, static_cast<std::size_t>(c));
    }
    softmax_row(clogits, 2);
    res.class_probs = {clogits[0], clogits[1]};

    if (training) fr.cache->seqs.push_back(std::move(sc));
    fr.seqs.push_back(std::move(res));
  }
  return fr;
}

double mlm_loss(const std::vector<MlmPrediction>& preds) {
  std::size_t total_masked = 0;
  double loss = 0.0;
  for (const auto& p : preds) {
    for (std::size_t j = 0; j < p.positions.size(); ++j) {
      const int target = p.target_ids[j];
      loss -= std::log(p.probs.at(j, static_cast<std::size_t>(target)));
      ++total_masked;
    }
  }
  if (total_masked == 0) {
    throw ContractError("mlm_loss: no masked positions in batch");
  }
  return loss / static_cast<double>(preds.size());
}

double classification_loss(
    const std::vector<std::array<double, 2>>& class_probs,
    const std::vector<bool>& labels, const std::array<double, 2>& weights) {
  if (class_probs.size() != labels.size() || class_probs.empty()) {
    throw ContractError("classification_loss: empty or misaligned batch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = labels[i] ? 1 : 0;
    num -= weights[y] * std::log(class_probs[i][y]);
    den += weights[y];
  }
  return num / den;
}

Losses TransformerModel::compute_losses(
    const std::vector<EmbeddedSequence>& batch, const ForwardResult& fr) const {
  Losses out;
  std::vector<MlmPrediction> preds;
  std::size_t masked = 0;
  for (const auto& s : fr.seqs) {
    masked += s.mlm.positions.size();
    preds.push_back(s.mlm);
  }
  if (cfg_.lambda_mlm > 0.0) {
    out.mlm = mlm_loss(preds);  // throws when masked == 0
  }
  std::vector<std::array<double, 2>> probs;
  std::vector<bool> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    probs.push_back(fr.seqs[i].class_probs);
    labels.push_back(batch[i].label);
  }
  out.classification = classification_loss(probs, labels, cfg_.class_weights);
  out.total = cfg_.lambda_mlm * out.mlm +
              (1.0 - cfg_.lambda_mlm) * out.classification;
  return out;
}

void TransformerModel::backward(const std::vector<EmbeddedSequence>& batch,
                                ForwardResult& fr) {
  if (!fr.cache || fr.cache->consumed) {
    throw ContractError("backward requires a fresh train-mode forward");
  }
  if (fr.seqs.size() != batch.size() ||
      fr.cache->seqs.size() != batch.size()) {
    throw ContractError("backward: batch does not match forward result");
  }
  fr.cache->consumed = true;

  const std::size_t d = cfg_.d_model;
  const std::size_t heads = cfg_.n_heads;
  const std::size_t dh = d / heads;
  const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
  const double inv_h = 1.0 / static_cast<double>(batch.size());

  double weight_sum = 0.0;
  for (const auto& seq : batch) {
    weight_sum += cfg_.class_weights[seq.label ? 1 : 0];
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EmbeddedSequence& seq = batch[i];
    const SequenceResult& sr = fr.seqs[i];
    SeqCache& sc = fr.cache->seqs[i];
    const std::size_t n = sc.n;

    Tensor d_hidden(n, d);

    // classification head
    {
      const std::size_t y = seq.label ? 1 : 0;
      const double scale = (1.0 - cfg_.lambda_mlm) *
                           cfg_.class_weights[y] / weight_sum;
      const double* h0 = sr.encoded.hidden.row(0);
      for (std::size_t c = 0; c < 2; ++c) {
        const double dlogit =
            scale * (sr.class_probs[c] - (c == y ? 1.0 : 0.0));
        kernels::axpy(dlogit, h0, cls_w.grad.row(c), d);
        cls_b.grad.at(0, c) += dlogit;
        kernels::axpy(dlogit, cls_w.value.row(c), d_hidden.row(0), d);
      }
    }

    // MLM head
    const std::size_t nm = sr.mlm.positions.size();
    if (nm > 0 && cfg_.lambda_mlm > 0.0) {
      Tensor d_logits = sr.mlm.probs;
      for (std::size_t j = 0; j < nm; ++j) {
        d_logits.at(j, static_cast<std::size_t>(sr.mlm.target_ids[j])) -= 1.0;
      }
      const double scale = cfg_.lambda_mlm * inv_h;
      for (double& v : d_logits.data) v *= scale;
      kernels::matmul_at_b(d_logits.data.data(), sc.h_masked.data.data(),
                           mlm_w.grad.data.data(), nm, cfg_.vocab_size, d);
      colsum_into(d_logits, mlm_b.grad);
      Tensor d_hm(nm, d);
      kernels::matmul(d_logits.data.data(), mlm_w.value.data.data(),
                      d_hm.data.data(), nm, cfg_.vocab_size, d, false);
      for (std::size_t j = 0; j < nm; ++j) {
        kernels::axpy(1.0, d_hm.row(j), d_hidden.row(sr.mlm.positions[j]), d);
      }
    }

    // encoder stack, reversed
    Tensor d_out = std::move(d_hidden);
    for (std::size_t lrev = cfg_.n_layers; lrev-- > 0;) {
      LayerParams& lp = layers[lrev];
      LayerCache& lc = fr.cache->seqs[i].layers[lrev];

      Tensor d_res2 =
          layer_norm_backward(d_out, lc.ln2, lp.ln2_gamma, lp.ln2_beta);
      Tensor d_ff2 = d_res2;
      if (lc.drop2.rows > 0) apply_mask(d_ff2, lc.drop2);
      Tensor d_out1 = std::move(d_res2);  // residual branch

      kernels::matmul_at_b(lc.act.data.data(), d_ff2.data.data(),
                           lp.ff_w2.grad.data.data(), n, cfg_.d_ff, d);
      colsum_into(d_ff2, lp.ff_b2.grad);
      Tensor d_act(n, cfg_.d_ff);
      kernels::matmul_a_bt(d_ff2.data.data(), lp.ff_w2.value.data.data(),
                           d_act.data.data(), n, d, cfg_.d_ff, false);
      for (std::size_t idx = 0; idx < d_act.data.size(); ++idx) {
        d_act.data[idx] *= gelu_grad(lc.ff1.data[idx]);
      }
      kernels::matmul_at_b(lc.out1.data.data(), d_act.data.data(),
                           lp.ff_w1.grad.data.data(), n, d, cfg_.d_ff);
      colsum_into(d_act, lp.ff_b1.grad);
      kernels::matmul_a_bt(d_act.data.data(), lp.ff_w1.value.data.data(),
                           d_out1.data.data(), n, cfg_.d_ff, d, true);

      Tensor d_res1 =
          layer_norm_backward(d_out1, lc.ln1, lp.ln1_gamma, lp.ln1_beta);
      Tensor d_attn_out = d_res1;
      if (lc.drop1.rows > 0) apply_mask(d_attn_out, lc.drop1);
      Tensor d_x = std::move(d_res1);  // residual branch

      kernels::matmul_at_b(lc.ctx.data.data(), d_attn_out.data.data(),
                           lp.wo.grad.data.data(), n, d, d);
      colsum_into(d_attn_out, lp.bo.grad);
      Tensor d_ctx(n, d);
      kernels::matmul_a_bt(d_attn_out.data.data(), lp.wo.value.data.data(),
                           d_ctx.data.data(), n, d, d, false);

      Tensor d_q(n, d), d_k(n, d), d_v(n, d);
      Tensor qh(n, dh), kh(n, dh), vh(n, dh), d_ctxh(n, dh);
      for (std::size_t h = 0; h < heads; ++h) {
        copy_head(lc.q, qh, h, dh);
        copy_head(lc.k, kh, h, dh);
        copy_head(lc.v, vh, h, dh);
        copy_head(d_ctx, d_ctxh, h, dh);
        const Tensor& a = lc.attn[h];

        Tensor d_a(n, n);
        kernels::matmul_a_bt(d_ctxh.data.data(), vh.data.data(),
                             d_a.data.data(), n, dh, n, false);
        Tensor d_vh(n, dh);
        kernels::matmul_at_b(a.data.data(), d_ctxh.data.data(),
                             d_vh.data.data(), n, n, dh);
        // softmax backward row-wise, then the 1/sqrt(dh) score scale
        Tensor d_s(n, n);
        for (std::size_t r = 0; r < n; ++r) {
          const double* ar = a.row(r);
          const double* dar = d_a.row(r);
          const double rd = kernels::dot(ar, dar, n);
          double* dsr = d_s.row(r);
          for (std::size_t c = 0; c < n; ++c) {
            dsr[c] = alpha * ar[c] * (dar[c] - rd);
          }
        }
        Tensor d_qh(n, dh);
        kernels::matmul(d_s.data.data(), kh.data.data(), d_qh.data.data(), n,
                        n, dh, false);
        Tensor d_kh(n, dh);
        kernels::matmul_at_b(d_s.data.data(), qh.data.data(),
                             d_kh.data.data(), n, n, dh);
        add_head_back(d_qh, d_q, h, dh);
        add_head_back(d_kh, d_k, h, dh);
        add_head_back(d_vh, d_v, h, dh);
      }

      auto proj_backward = [&](const Tensor& d_y, Param& w, Param& b) {
        kernels::matmul_at_b(lc.x_in.data.data(), d_y.data.data(),
                             w.grad.data.data(), n, d, d);
        colsum_into(d_y, b.grad);
        kernels::matmul_a_bt(d_y.data.data(), w.value.data.data(),
                             d_x.data.data(), n, d, d, true);
      };
      proj_backward(d_q, lp.wq, lp.bq);
      proj_backward(d_k, lp.wk, lp.bk);
      proj_backward(d_v, lp.wv, lp.bv);

      d_out = std::move(d_x);
    }

    Tensor d_x_full(cfg_.max_positions, d);
    std::memcpy(d_x_full.data.data(), d_out.data.data(),
                n * d * sizeof(double));
    embed_backward(seq, d_x_full, embedding);
  }
}

}  // namespace provtrace
