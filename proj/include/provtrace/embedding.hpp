#pragma once

#include <cstdint>

#include "provtrace/rng.hpp"
#include "provtrace/tensor.hpp"
#include "provtrace/vocab.hpp"

namespace provtrace {

enum class Mode { Train, Eval };

// Token lookup plus a learned linear projection of the scalar time-slot
// value (slot_w * s + slot_b), plus learned absolute positions when
// pos_table is non-empty (the LSTM path leaves it empty).
struct EmbeddingParams {
  Param token_table;  // V x d
  Param slot_w;       // 1 x d
  Param slot_b;       // 1 x d
  Param pos_table;    // L x d, optional

  EmbeddingParams() = default;
  EmbeddingParams(std::size_t vocab, std::size_t d, std::size_t max_positions,
                  const char* prefix);

  void init(Rng& rng, double sigma);
  std::size_t dim() const { return token_table.value.cols; }
};

// out row k = token_table[ids[k]] + slot_w * s_k + slot_b (+ pos_table[k]).
Tensor embed(const EmbeddedSequence& seq, const EmbeddingParams& params);

// Accumulates parameter gradients for d(out); rows of d_out that are zero
// contribute nothing, so pad isolation upstream keeps pad rows untrained.
void embed_backward(const EmbeddedSequence& seq, const Tensor& d_out,
                    EmbeddingParams& params);

}  // namespace provtrace
