#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "provtrace/embedding.hpp"
#include "provtrace/tensor.hpp"
#include "provtrace/vocab.hpp"

namespace provtrace {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  double dropout_rate = 0.1;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 0;  // L = max trace length + 2
  double lambda_mlm = 0.5;        // total = lambda*MLM + (1-lambda)*class
  std::array<double, 2> class_weights{1.0, 1.0};  // {benign, malicious}

  void validate() const;
};

// Per masked position j of one sequence: a probability vector over the
// vocabulary, plus the original token id to predict.
struct MlmPrediction {
  std::vector<std::size_t> positions;
  std::vector<int> target_ids;
  Tensor probs;  // n_masked x V, rows sum to 1
};

struct EncodedOutput {
  Tensor hidden;                  // L x d, pad rows zero
  std::vector<Tensor> attention;  // layer-major, then head; L x L, pad
                                  // query rows and pad key columns zero
};

struct SequenceResult {
  EncodedOutput encoded;
  MlmPrediction mlm;
  std::array<double, 2> class_probs{0.0, 0.0};  // {benign, malicious}
};

struct BatchCache;  // activation caches for backward (train mode only)

struct ForwardResult {
  std::vector<SequenceResult> seqs;
  std::unique_ptr<BatchCache> cache;

  ForwardResult();
  ForwardResult(ForwardResult&&) noexcept;
  ForwardResult& operator=(ForwardResult&&) noexcept;
  ~ForwardResult();
};

struct LayerParams {
  Param wq, bq, wk, bk, wv, bv, wo, bo;
  Param ln1_gamma, ln1_beta;
  Param ff_w1, ff_b1, ff_w2, ff_b2;
  Param ln2_gamma, ln2_beta;
};

struct Losses {
  double mlm = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

// Mean over sequences of the summed cross entropy at that sequence's
// masked positions (natural log). Throws when no sequence has a mask.
double mlm_loss(const std::vector<MlmPrediction>& preds);

// Class-weighted negative log likelihood: sum(w_y * -log p_y) / sum(w_y).
double classification_loss(
    const std::vector<std::array<double, 2>>& class_probs,
    const std::vector<bool>& labels, const std::array<double, 2>& weights);

// Post-norm transformer encoder with an MLM head over masked positions and
// a 2-way classification head on the [DTC] position. All arithmetic runs
// through the kernels module in double precision; backward is analytic.
class TransformerModel {
 public:
  TransformerModel(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // Padded positions are excluded from attention, receive zero hidden
  // state, and contribute no gradient. Train mode caches activations for
  // backward; dropout draws come from `rng` (rate 0 disables it).
  ForwardResult forward(const std::vector<EmbeddedSequence>& batch, Mode mode,
                        Rng* rng = nullptr, bool want_attention = false) const;

  Losses compute_losses(const std::vector<EmbeddedSequence>& batch,
                        const ForwardResult& fr) const;

  // Populates every parameter's gradient buffer for the joint loss.
  // Requires a train-mode forward on the same batch.
  void backward(const std::vector<EmbeddedSequence>& batch, ForwardResult& fr);

  void zero_grads();
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  EmbeddingParams embedding;
  std::vector<LayerParams> layers;
  Param mlm_w;  // V x d
  Param mlm_b;  // 1 x V
  Param cls_w;  // 2 x d
  Param cls_b;  // 1 x 2

 private:
  ModelConfig cfg_;
};

}  // namespace provtrace
