#include "provtrace/optimizer.hpp"

#include <cmath>

#include "provtrace/errors.hpp"

namespace provtrace {

AdamW::AdamW(std::vector<Param*> params, const AdamWConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.emplace_back(p->value.rows, p->value.cols);
    v_.emplace_back(p->value.rows, p->value.cols);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Param& p = *params_[pi];
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      if (!std::isfinite(g)) {
        throw ContractError("non-finite gradient in parameter '" + p.name +
                            "'");
      }
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.value.data[i] -=
          cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                     cfg_.weight_decay * p.value.data[i]);
      p.grad.data[i] = 0.0;
    }
  }
}

}  // namespace provtrace
