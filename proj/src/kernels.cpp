#include "glocal/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

namespace glocal::kernels {

namespace {

// Below this many multiply-adds a fork/join costs more than it saves.
constexpr std::size_t kParallelWorkThreshold = 1u << 16;

inline void gemm_nn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                        std::size_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m,
                        std::size_t k, std::size_t n) {
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

std::vector<double> transpose(std::span<const double> b, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

inline void softmax_row(const double* x, const unsigned char* mask, double tau, double* out,
                        std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j)
    if (mask[j]) mx = std::max(mx, x[j] / tau);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask[j]) {
      out[j] = std::exp(x[j] / tau - mx);
      sum += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  for (std::size_t j = 0; j < cols; ++j) out[j] /= sum;
}

bool use_parallel(std::size_t work) {
  return work >= kParallelWorkThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gemm_nn_row(a.data(), b.data(), c.data(), i, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gemm_tn_row(a.data(), b.data(), c.data(), i, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const std::vector<double> bt = transpose(b, n, k);
  gemm_nn(a, bt, c, m, k, n);
}

void softmax_rows(std::span<const double> x, std::span<const unsigned char> mask, double tau,
                  std::span<double> out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    softmax_row(x.data() + r * cols, mask.data(), tau, out.data() + r * cols, cols);
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const std::vector<double> bt = transpose(b, n, k);
  gemm_nn(a, bt, c, m, k, n);
}

void softmax_rows(std::span<const double> x, std::span<const unsigned char> mask, double tau,
                  std::span<double> out, std::size_t rows, std::size_t cols) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < nrows; ++r)
    softmax_row(x.data() + r * cols, mask.data(), tau, out.data() + r * cols, cols);
}

}  // namespace parallel

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) parallel::gemm_nn(a, b, c, m, k, n);
  else serial::gemm_nn(a, b, c, m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) parallel::gemm_tn(a, b, c, m, k, n);
  else serial::gemm_tn(a, b, c, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) parallel::gemm_nt(a, b, c, m, k, n);
  else serial::gemm_nt(a, b, c, m, k, n);
}

void softmax_rows(std::span<const double> x, std::span<const unsigned char> mask, double tau,
                  std::span<double> out, std::size_t rows, std::size_t cols) {
  if (use_parallel(rows * cols * 8)) parallel::softmax_rows(x, mask, tau, out, rows, cols);
  else serial::softmax_rows(x, mask, tau, out, rows, cols);
}

int max_threads() { return std::max(1, omp_get_max_threads()); }

void set_max_threads(int n) { omp_set_num_threads(std::max(1, n)); }

void configure_threads_from_env() {
  const char* env = std::getenv("GLOCAL_THREADS");
  if (!env) return;
  try {
    const int n = std::stoi(env);
    if (n > 0) set_max_threads(n);
  } catch (const std::exception&) {
    // Ignored: an unparsable value leaves the OpenMP default in place.
  }
}

}  // namespace glocal::kernels
