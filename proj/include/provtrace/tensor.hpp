#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "provtrace/errors.hpp"

namespace provtrace {

// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// A learnable tensor paired with its gradient buffer of identical shape.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), value(r, c), grad(r, c) {}
};

inline void check_shape(const Tensor& t, std::size_t r, std::size_t c,
                        const char* what) {
  if (t.rows != r || t.cols != c) {
    throw ContractError(std::string("shape mismatch in ") + what);
  }
}

}  // namespace provtrace
