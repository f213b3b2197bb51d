#include "provtrace/embedding.hpp"

#include "provtrace/kernels.hpp"

namespace provtrace {

EmbeddingParams::EmbeddingParams(std::size_t vocab, std::size_t d,
                                 std::size_t max_positions,
                                 const char* prefix)
    : token_table(std::string(prefix) + ".token_table", vocab, d),
      slot_w(std::string(prefix) + ".slot_w", 1, d),
      slot_b(std::string(prefix) + ".slot_b", 1, d),
      pos_table(std::string(prefix) + ".pos_table", max_positions, d) {}

void EmbeddingParams::init(Rng& rng, double sigma) {
  for (double& v : token_table.value.data) v = rng.truncated_normal(sigma);
  for (double& v : slot_w.value.data) v = rng.truncated_normal(sigma);
  // slot_b stays zero (it is a bias)
  for (double& v : pos_table.value.data) v = rng.truncated_normal(sigma);
}

Tensor embed(const EmbeddedSequence& seq, const EmbeddingParams& params) {
  const std::size_t L = seq.length();
  const std::size_t d = params.dim();
  Tensor out(L, d);
  for (std::size_t k = 0; k < L; ++k) {
    const int id = seq.token_ids[k];
    const double* tok = params.token_table.value.row(
        static_cast<std::size_t>(id));
    const double s = seq.slot_values[k];
    const double* sw = params.slot_w.value.row(0);
    const double* sb = params.slot_b.value.row(0);
    double* o = out.row(k);
    for (std::size_t j = 0; j < d; ++j) o[j] = tok[j] + sb[j];
    if (params.pos_table.value.rows > 0) {
      kernels::axpy(1.0, params.pos_table.value.row(k), o, d);
    }
    // the slot term is the final addend, so the additive decomposition
    // embed(t, s) == embed(t, 0) + s * slot_w holds bit-exactly
    for (std::size_t j = 0; j < d; ++j) o[j] += s * sw[j];
  }
  return out;
}

void embed_backward(const EmbeddedSequence& seq, const Tensor& d_out,
                    EmbeddingParams& params) {
  const std::size_t L = seq.length();
  const std::size_t d = params.dim();
  for (std::size_t k = 0; k < L; ++k) {
    const double* g = d_out.row(k);
    const int id = seq.token_ids[k];
    kernels::axpy(1.0, g,
                  params.token_table.grad.row(static_cast<std::size_t>(id)),
                  d);
    kernels::axpy(seq.slot_values[k], g, params.slot_w.grad.row(0), d);
    kernels::axpy(1.0, g, params.slot_b.grad.row(0), d);
    if (params.pos_table.value.rows > 0) {
      kernels::axpy(1.0, g, params.pos_table.grad.row(k), d);
    }
  }
}

}  // namespace provtrace
