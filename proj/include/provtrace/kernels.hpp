#pragma once

#include <cstddef>

// Data-parallel inner loops shared by the transformer and the LSTM.
// Every kernel exists twice: a scalar reference implementation and an
// AVX2/FMA variant. The dispatched entry points select a backend at
// runtime (CPUID probe, overridable via PROVTRACE_KERNELS=scalar|avx2
// or set_backend()); the two backends are equivalence-tested against
// each other.
//
// Matrices are dense row-major. Kernel semantics:
//   matmul       C[m x n] (+)= A[m x k] * B[k x n]
//   matmul_a_bt  C[m x n] (+)= A[m x k] * B^T     (B is n x k)
//   matmul_at_b  C[k x n]  += A^T      * B        (A is m x k, B is m x n)
//   axpy         y[i] += alpha * x[i]
//   dot          sum_i x[i] * y[i]

namespace provtrace::kernels {

enum class Backend { Auto, Scalar, Avx2 };

// Forces a backend; Avx2 on unsupported hardware throws. Intended for
// tests and debugging.
void set_backend(Backend b);
const char* active_backend();
bool avx2_available();

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate);
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate);
void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

namespace scalar {
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate);
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate);
void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate);
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate);
void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
}  // namespace avx2

}  // namespace provtrace::kernels
