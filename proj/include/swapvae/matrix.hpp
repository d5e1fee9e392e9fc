#pragma once

// Dense row-major matrix of 64-bit reals with BLAS-backed multiplication.
// The library stores every tensor as a Matrix (vectors are 1×n or n×1); all
// heavy products route through cblas_dgemm.

#include <cblas.h>
#include <malloc.h>

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <vector>

#include "swapvae/errors.hpp"

namespace swapvae {

// Startup hint, run before OpenBLAS's own loader-time core detection (which
// this library links statically so that ordering is controllable). On
// hypervisors that mask the CPU model string, OpenBLAS's runtime dispatch can
// fall back to a generic SSE kernel even though AVX-512/AVX2 are available;
// steering it by feature flag recovers a 2-4x dgemm speedup. The kernel choice
// is deterministic per machine and environment, so run-to-run reproducibility
// is unaffected; an explicit OPENBLAS_CORETYPE in the environment always wins.
// The mmap threshold keeps glibc from returning every batch-sized buffer to
// the kernel, which otherwise dominates system time in training loops.
__attribute__((constructor(101))) inline void numerics_startup_hint() {
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f"))
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
}

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return rows * cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw shape_error("shape mismatch: " + what);
}

// C = alpha * op(A) * op(B) + beta * C, with op transposing when requested.
inline void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a, const Matrix& b,
                 double beta, Matrix& c) {
  const std::size_t am = trans_a ? a.cols : a.rows;
  const std::size_t ak = trans_a ? a.rows : a.cols;
  const std::size_t bk = trans_b ? b.cols : b.rows;
  const std::size_t bn = trans_b ? b.rows : b.cols;
  require_shape(ak == bk, "gemm inner dimensions");
  require_shape(c.rows == am && c.cols == bn, "gemm output");
  if (am == 0 || bn == 0) return;
  if (ak == 0) {  // empty inner dimension: dgemm rejects lda = 0, result is beta * C
    if (beta == 0.0)
      c.fill(0.0);
    else if (beta != 1.0)
      for (double& v : c.data) v *= beta;
    return;
  }
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(am), static_cast<int>(bn),
              static_cast<int>(ak), alpha, a.data.data(), static_cast<int>(a.cols), b.data.data(),
              static_cast<int>(b.cols), beta, c.data.data(), static_cast<int>(c.cols));
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  gemm(false, false, 1.0, a, b, 0.0, c);
  return c;
}

// a * b^T; the forward shape for y = x W^T with W stored out-by-in.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.rows);
  gemm(false, true, 1.0, a, b, 0.0, c);
  return c;
}

// a^T * b; the gradient shape for dW = dy^T x.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols, b.cols);
  gemm(true, false, 1.0, a, b, 0.0, c);
  return c;
}

// Pins BLAS to one thread: models are small and the training contract is a
// single-threaded step, so concurrent model instances must not oversubscribe.
inline void init_numerics() { openblas_set_num_threads(1); }

}  // namespace swapvae
