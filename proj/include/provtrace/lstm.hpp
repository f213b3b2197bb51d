#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "provtrace/embedding.hpp"
#include "provtrace/tensor.hpp"
#include "provtrace/vocab.hpp"

namespace provtrace {

struct LstmConfig {
  std::size_t hidden_size = 64;
  std::size_t embed_dim = 64;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 0;
  std::array<double, 2> class_weights{1.0, 1.0};

  void validate() const;
};

struct LstmBatchCache;

struct LstmForwardResult {
  std::vector<std::array<double, 2>> class_probs;
  std::unique_ptr<LstmBatchCache> cache;

  LstmForwardResult();
  LstmForwardResult(LstmForwardResult&&) noexcept;
  LstmForwardResult& operator=(LstmForwardResult&&) noexcept;
  ~LstmForwardResult();
};

// Single-layer unidirectional LSTM over the non-pad prefix, classifying
// from the last non-pad hidden state. Consumes the same EmbeddedSequence
// records as the transformer (encoded with p_mask = 0), including the
// slot values when temporal encoding is on.
class LstmModel {
 public:
  LstmModel(const LstmConfig& cfg, std::uint64_t init_seed);

  const LstmConfig& config() const { return cfg_; }

  LstmForwardResult forward(const std::vector<EmbeddedSequence>& batch,
                            Mode mode) const;
  double compute_loss(const std::vector<EmbeddedSequence>& batch,
                      const LstmForwardResult& fr) const;
  void backward(const std::vector<EmbeddedSequence>& batch,
                LstmForwardResult& fr);

  void zero_grads();
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  EmbeddingParams embedding;  // no positional table
  Param w_ih;   // embed_dim x 4h, gate order i,f,g,o
  Param w_hh;   // h x 4h
  Param bias;   // 1 x 4h, forget gate bias starts at 1
  Param cls_w;  // 2 x h
  Param cls_b;  // 1 x 2

 private:
  LstmConfig cfg_;
};

struct CrossReport {
  std::size_t a_correct_b_wrong = 0;
  std::size_t b_correct_a_wrong = 0;
  std::size_t both_correct = 0;
  std::size_t both_wrong = 0;
  std::size_t total = 0;
};

// Table of traces one model gets right and the other wrong.
CrossReport cross_classification_report(const std::vector<bool>& preds_a,
                                        const std::vector<bool>& preds_b,
                                        const std::vector<bool>& labels);

}  // namespace provtrace
