#include "provtrace/lstm.hpp"

#include <cmath>
#include <cstring>

#include "provtrace/errors.hpp"
#include "provtrace/kernels.hpp"
#include "provtrace/transformer.hpp"

namespace provtrace {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmSeqCache {
  std::size_t n = 0;
  Tensor x;       // n x e embedded inputs
  Tensor gates;   // n x 4h post-activation (i, f, g, o)
  Tensor c;       // n x h cell states
  Tensor h;       // n x h hidden states
};

}  // namespace

struct LstmBatchCache {
  std::vector<LstmSeqCache> seqs;
  bool consumed = false;
};

LstmForwardResult::LstmForwardResult() = default;
LstmForwardResult::LstmForwardResult(LstmForwardResult&&) noexcept = default;
LstmForwardResult& LstmForwardResult::operator=(LstmForwardResult&&) noexcept =
    default;
LstmForwardResult::~LstmForwardResult() = default;

void LstmConfig::validate() const {
  if (hidden_size == 0 || embed_dim == 0 || vocab_size == 0 ||
      max_positions == 0) {
    throw ContractError("lstm config: all dimensions must be positive");
  }
}

LstmModel::LstmModel(const LstmConfig& cfg, std::uint64_t init_seed)
    : embedding(cfg.vocab_size, cfg.embed_dim, 0, "embedding"),
      w_ih("lstm.w_ih", cfg.embed_dim, 4 * cfg.hidden_size),
      w_hh("lstm.w_hh", cfg.hidden_size, 4 * cfg.hidden_size),
      bias("lstm.bias", 1, 4 * cfg.hidden_size),
      cls_w("cls.w", 2, cfg.hidden_size),
      cls_b("cls.b", 1, 2),
      cfg_(cfg) {
  cfg.validate();
  Rng rng(init_seed);
  const double sigma = 0.02;
  embedding.init(rng, sigma);
  for (double& v : w_ih.value.data) v = rng.truncated_normal(sigma);
  for (double& v : w_hh.value.data) v = rng.truncated_normal(sigma);
  for (std::size_t j = cfg.hidden_size; j < 2 * cfg.hidden_size; ++j) {
    bias.value.at(0, j) = 1.0;  // forget gate starts open
  }
  for (double& v : cls_w.value.data) v = rng.truncated_normal(sigma);
}

std::vector<Param*> LstmModel::params() {
  return {&embedding.token_table, &embedding.slot_w, &embedding.slot_b,
          &w_ih, &w_hh, &bias, &cls_w, &cls_b};
}

std::vector<const Param*> LstmModel::params() const {
  auto mut = const_cast<LstmModel*>(this)->params();
  return {mut.begin(), mut.end()};
}

void LstmModel::zero_grads() {
  for (Param* p : params()) p->grad.zero();
}

LstmForwardResult LstmModel::forward(
    const std::vector<EmbeddedSequence>& batch, Mode mode) const {
  const std::size_t h = cfg_.hidden_size;
  const std::size_t e = cfg_.embed_dim;
  const bool training = mode == Mode::Train;

  LstmForwardResult fr;
  if (training) fr.cache = std::make_unique<LstmBatchCache>();

  for (const EmbeddedSequence& seq : batch) {
    std::size_t n = 0;
    while (n < seq.length() && seq.attention_mask[n]) ++n;
    if (n == 0) {
      throw ContractError("lstm forward: sequence has no non-pad content");
    }

    Tensor x_full = embed(seq, embedding);
    LstmSeqCache sc;
    sc.n = n;
    sc.x = Tensor(n, e);
    std::memcpy(sc.x.data.data(), x_full.data.data(), n * e * sizeof(double));
    sc.gates = Tensor(n, 4 * h);
    sc.c = Tensor(n, h);
    sc.h = Tensor(n, h);

    std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      double* g = sc.gates.row(t);
      std::memcpy(g, bias.value.row(0), 4 * h * sizeof(double));
      // g += x_t * W_ih + h_prev * W_hh
      kernels::matmul(sc.x.row(t), w_ih.value.data.data(), g, 1, e, 4 * h,
                      true);
      kernels::matmul(h_prev.data(), w_hh.value.data.data(), g, 1, h, 4 * h,
                      true);
      double* ct = sc.c.row(t);
      double* ht = sc.h.row(t);
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = sigmoid(g[j]);
        const double fg = sigmoid(g[h + j]);
        const double gg = std::tanh(g[2 * h + j]);
        const double og = sigmoid(g[3 * h + j]);
        g[j] = ig;
        g[h + j] = fg;
        g[2 * h + j] = gg;
        g[3 * h + j] = og;
        ct[j] = fg * c_prev[j] + ig * gg;
        ht[j] = og * std::tanh(ct[j]);
        if (!std::isfinite(ht[j])) {
          throw ContractError("non-finite activation in lstm step " +
                              std::to_string(t));
        }
      }
      std::memcpy(h_prev.data(), ht, h * sizeof(double));
      std::memcpy(c_prev.data(), ct, h * sizeof(double));
    }

    double clogits[2];
    for (std::size_t c = 0; c < 2; ++c) {
      clogits[c] = kernels::dot(cls_w.value.row(c), sc.h.row(n - 1), h) +
                   cls_b.value.at(0, c);
    }
    const double mx = std::max(clogits[0], clogits[1]);
    const double e0 = std::exp(clogits[0] - mx);
    const double e1 = std::exp(clogits[1] - mx);
    fr.class_probs.push_back({e0 / (e0 + e1), e1 / (e0 + e1)});

    if (training) fr.cache->seqs.push_back(std::move(sc));
  }
  return fr;
}

double LstmModel::compute_loss(const std::vector<EmbeddedSequence>& batch,
                               const LstmForwardResult& fr) const {
  std::vector<bool> labels;
  for (const auto& s : batch) labels.push_back(s.label);
  return classification_loss(fr.class_probs, labels, cfg_.class_weights);
}

void LstmModel::backward(const std::vector<EmbeddedSequence>& batch,
                         LstmForwardResult& fr) {
  if (!fr.cache || fr.cache->consumed) {
    throw ContractError("lstm backward requires a fresh train-mode forward");
  }
  fr.cache->consumed = true;
  const std::size_t h = cfg_.hidden_size;
  const std::size_t e = cfg_.embed_dim;

  double weight_sum = 0.0;
  for (const auto& seq : batch) {
    weight_sum += cfg_.class_weights[seq.label ? 1 : 0];
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EmbeddedSequence& seq = batch[i];
    LstmSeqCache& sc = fr.cache->seqs[i];
    const std::size_t n = sc.n;

    std::vector<double> d_h(h, 0.0), d_c(h, 0.0);
    {
      const std::size_t y = seq.label ? 1 : 0;
      const double scale = cfg_.class_weights[y] / weight_sum;
      for (std::size_t c = 0; c < 2; ++c) {
        const double dlogit =
            scale * (fr.class_probs[i][c] - (c == y ? 1.0 : 0.0));
        kernels::axpy(dlogit, sc.h.row(n - 1), cls_w.grad.row(c), h);
        cls_b.grad.at(0, c) += dlogit;
        kernels::axpy(dlogit, cls_w.value.row(c), d_h.data(), h);
      }
    }

    Tensor d_x(n, e);
    std::vector<double> d_gates(4 * h);
    for (std::size_t t = n; t-- > 0;) {
      const double* g = sc.gates.row(t);
      const double* ct = sc.c.row(t);
      const double* c_prev = t > 0 ? sc.c.row(t - 1) : nullptr;
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = g[j], fg = g[h + j], gg = g[2 * h + j],
                     og = g[3 * h + j];
        const double tc = std::tanh(ct[j]);
        const double d_o = d_h[j] * tc;
        d_c[j] += d_h[j] * og * (1.0 - tc * tc);
        const double cp = c_prev ? c_prev[j] : 0.0;
        const double d_i = d_c[j] * gg;
        const double d_f = d_c[j] * cp;
        const double d_g = d_c[j] * ig;
        d_gates[j] = d_i * ig * (1.0 - ig);
        d_gates[h + j] = d_f * fg * (1.0 - fg);
        d_gates[2 * h + j] = d_g * (1.0 - gg * gg);
        d_gates[3 * h + j] = d_o * og * (1.0 - og);
        d_c[j] *= fg;  // flows to c_{t-1}
      }
      // parameter grads
      kernels::matmul_at_b(sc.x.row(t), d_gates.data(),
                           w_ih.grad.data.data(), 1, e, 4 * h);
      if (t > 0) {
        kernels::matmul_at_b(sc.h.row(t - 1), d_gates.data(),
                             w_hh.grad.data.data(), 1, h, 4 * h);
      }
      kernels::axpy(1.0, d_gates.data(), bias.grad.row(0), 4 * h);
      // input and recurrent grads
      kernels::matmul_a_bt(d_gates.data(), w_ih.value.data.data(), d_x.row(t),
                           1, 4 * h, e, false);
      std::fill(d_h.begin(), d_h.end(), 0.0);
      if (t > 0) {
        kernels::matmul_a_bt(d_gates.data(), w_hh.value.data.data(),
                             d_h.data(), 1, 4 * h, h, false);
      }
    }

    Tensor d_x_full(seq.length(), e);
    std::memcpy(d_x_full.data.data(), d_x.data.data(), n * e * sizeof(double));
    embed_backward(seq, d_x_full, embedding);
  }
}

CrossReport cross_classification_report(const std::vector<bool>& preds_a,
                                        const std::vector<bool>& preds_b,
                                        const std::vector<bool>& labels) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size()) {
    throw ContractError("cross report: prediction/label length mismatch");
  }
  CrossReport r;
  r.total = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool a_ok = preds_a[i] == labels[i];
    const bool b_ok = preds_b[i] == labels[i];
    if (a_ok && b_ok) ++r.both_correct;
    if (a_ok && !b_ok) ++r.a_correct_b_wrong;
    if (!a_ok && b_ok) ++r.b_correct_a_wrong;
    if (!a_ok && !b_ok) ++r.both_wrong;
  }
  return r;
}

}  // namespace provtrace
