#pragma once

#include <cstddef>
#include <span>

// Dense inner loops used by the autodiff ops. Each kernel exists twice: a
// serial reference and an OpenMP version that splits independent output rows
// across threads. Both traverse every output element's reduction in the same
// order, so they agree bit for bit; tests/test_kernels.cpp holds them to that.
//
// All matrices are row-major. The gemm kernels accumulate into `c`.
namespace glocal::kernels {

namespace serial {

/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
/// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
/// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
/// Row-wise masked softmax of x / tau. mask has `cols` entries, nonzero = keep.
void softmax_rows(std::span<const double> x, std::span<const unsigned char> mask, double tau,
                  std::span<double> out, std::size_t rows, std::size_t cols);

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> x, std::span<const unsigned char> mask, double tau,
                  std::span<double> out, std::size_t rows, std::size_t cols);

}  // namespace parallel

// Dispatching entry points: the OpenMP variant is used only outside an
// enclosing parallel region and above a work threshold.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> x, std::span<const unsigned char> mask, double tau,
                  std::span<double> out, std::size_t rows, std::size_t cols);

/// Number of worker threads OpenMP regions may use (>= 1).
int max_threads();
void set_max_threads(int n);
/// Reads GLOCAL_THREADS and applies it if set to a positive integer.
void configure_threads_from_env();

}  // namespace glocal::kernels
