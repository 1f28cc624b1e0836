#pragma once

// Dense kernels used by the encoder. Every kernel has a serial reference
// formulation in `kernels::reference`, kept for tests and the benchmark; the
// production versions in `kernels` are cache-friendly and OpenMP-parallel over
// output rows. Row partitioning never changes the per-element summation order,
// so the parallel kernels are bitwise identical for any thread count.
//
// All matrices are row-major and passed as flat spans plus dimensions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <omp.h>

namespace toxbuster::kernels {

// Below this many multiply-adds a kernel runs on the calling thread.
inline constexpr std::size_t kParallelWork = 1u << 16;

namespace reference {

// C (+)= A[m x k] * B[k x n]
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

// C (+)= A[m x k] * B[n x k]^T
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

// C (+)= A[k x m]^T * B[k x n]
template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

template <typename T> void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    T *r = x.data() + i * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, r[j]);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (std::size_t j = 0; j < cols; ++j) r[j] /= sum;
  }
}

} // namespace reference

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false) {
  const T *__restrict pa = a.data();
  const T *__restrict pb = b.data();
  T *__restrict pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T *__restrict ci = pc + i * n;
    if (!accumulate) std::fill(ci, ci + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = pa[i * k + p];
      const T *__restrict bp = pb + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void transpose(std::span<const T> a, std::span<T> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
  thread_local std::vector<T> bt;
  bt.resize(k * n);
  transpose<T>(b, bt, n, k);
  matmul<T>(a, std::span<const T>(bt.data(), bt.size()), c, m, k, n, accumulate);
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
  const T *__restrict pa = a.data();
  const T *__restrict pb = b.data();
  T *__restrict pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T *__restrict ci = pc + i * n;
    if (!accumulate) std::fill(ci, ci + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T api = pa[p * m + i];
      const T *__restrict bp = pb + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename T> void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    reference::softmax_rows<T>(x.subspan(static_cast<std::size_t>(i) * cols, cols), 1, cols);
  }
}

// out[j] += sum_i x[i, j]
template <typename T> void column_sums(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T *__restrict xi = x.data() + i * cols;
    T *__restrict o = out.data();
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) o[j] += xi[j];
  }
}

template <typename T> void add_row_bias(std::span<T> x, std::span<const T> bias, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    T *__restrict xi = x.data() + i * cols;
    const T *__restrict b = bias.data();
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) xi[j] += b[j];
  }
}

template <typename T> T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T> T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);
  return cdf + x * pdf;
}

} // namespace toxbuster::kernels
