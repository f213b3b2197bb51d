#pragma once

#include <cstdint>
#include <vector>

#include "provtrace/tensor.hpp"

namespace provtrace {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled, scaled by lr
};

// Deterministic AdamW over a fixed parameter list. Decay applies uniformly
// to every parameter. Gradients are cleared after each step; a non-finite
// gradient aborts naming the parameter.
class AdamW {
 public:
  AdamW(std::vector<Param*> params, const AdamWConfig& cfg);

  void step();
  std::uint64_t steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace provtrace
