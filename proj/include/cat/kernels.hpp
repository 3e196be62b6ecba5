#pragma once

#include <cstddef>

// f64 array kernels behind a runtime-dispatched backend. The scalar backend is
// the reference; the AVX2 backend must agree with it (bitwise for the kernels
// marked exact below, within reduction-order tolerance for the rest).
//
// Backend selection: CAT_UDA_KERNELS=scalar|avx2|auto (default auto = best
// available), resolved once on first use; kernels::force() overrides in-process.
//
// Exactness contract (asserted in tests/test_kernels.cpp):
//   exact across backends:  vadd vsub vmul scal axpy relu_fwd relu_bwd
//                           gemm_nn gemm_tn colsum_acc
//   tolerance across backends (different reduction order): dot sum sumsq gemm_nt
// The scalar gemm/axpy use std::fma so their rounding matches the FMA SIMD path.

namespace cat::kernels {

enum class Backend { scalar, avx2 };

bool available(Backend b);
Backend active();
void force(Backend b);   // throws ConfigError if unavailable
const char* name(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sumsq(const double* a, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);
void scal(double alpha, double* x, std::size_t n);                       // x *= alpha
void axpy(double alpha, const double* x, double* y, std::size_t n);      // y += alpha*x
void relu_fwd(const double* x, double* y, std::size_t n);                // y = max(0,x)
void relu_bwd(const double* x, const double* cot, double* dx, std::size_t n);  // dx += cot where x>0

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// out[n] += column sums of A[m x n]
void colsum_acc(const double* a, double* out, std::size_t m, std::size_t n);

// Reference backend, directly callable (tests, oracles).
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sumsq(const double* a, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);
void scal(double alpha, double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void relu_fwd(const double* x, double* y, std::size_t n);
void relu_bwd(const double* x, const double* cot, double* dx, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void colsum_acc(const double* a, double* out, std::size_t m, std::size_t n);
}  // namespace scalar

#if defined(CAT_UDA_HAVE_AVX2)
// AVX2+FMA backend; compiled only when the toolchain supports it. Runtime CPU
// detection still gates dispatch to it.
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sumsq(const double* a, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);
void scal(double alpha, double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void relu_fwd(const double* x, double* y, std::size_t n);
void relu_bwd(const double* x, const double* cot, double* dx, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void colsum_acc(const double* a, double* out, std::size_t m, std::size_t n);
}  // namespace avx2
#endif

}  // namespace cat::kernels
