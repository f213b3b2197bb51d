#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "provtrace/kernels.hpp"

namespace provtrace::kernels {

namespace {

struct Vtable {
  decltype(&scalar::matmul) matmul;
  decltype(&scalar::matmul_a_bt) matmul_a_bt;
  decltype(&scalar::matmul_at_b) matmul_at_b;
  decltype(&scalar::axpy) axpy;
  decltype(&scalar::dot) dot;
  const char* name;
};

constexpr Vtable kScalar{scalar::matmul, scalar::matmul_a_bt,
                         scalar::matmul_at_b, scalar::axpy, scalar::dot,
                         "scalar"};
constexpr Vtable kAvx2{avx2::matmul, avx2::matmul_a_bt, avx2::matmul_at_b,
                       avx2::axpy, avx2::dot, "avx2"};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Vtable* pick_auto() {
  if (const char* env = std::getenv("PROVTRACE_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return &kScalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return &kAvx2;
  }
  return cpu_has_avx2() ? &kAvx2 : &kScalar;
}

const Vtable* active = nullptr;

const Vtable* table() {
  if (!active) active = pick_auto();
  return active;
}

}  // namespace

bool avx2_available() { return cpu_has_avx2(); }

void set_backend(Backend b) {
  switch (b) {
    case Backend::Auto:
      active = pick_auto();
      break;
    case Backend::Scalar:
      active = &kScalar;
      break;
    case Backend::Avx2:
      if (!cpu_has_avx2()) throw std::runtime_error("AVX2 not supported here");
      active = &kAvx2;
      break;
  }
}

const char* active_backend() { return table()->name; }

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  table()->matmul(a, b, c, m, k, n, accumulate);
}
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate) {
  table()->matmul_a_bt(a, b, c, m, k, n, accumulate);
}
void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  table()->matmul_at_b(a, b, c, m, k, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table()->axpy(alpha, x, y, n);
}
double dot(const double* x, const double* y, std::size_t n) {
  return table()->dot(x, y, n);
}

}  // namespace provtrace::kernels
