#pragma once

#include <cstddef>

namespace gped {

// Minimal dense kernels used by the layers. Everything is row-major and
// written so the inner loop runs over contiguous memory and autovectorizes.

// C[m x n] = A[m x k] * B[k x n]       (+= when accumulate)
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k, bool accumulate = false);

// C[m x n] = A[m x k] * B[n x k]^T     (+= when accumulate)
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k, bool accumulate = false);

// C[m x n] = A[k x m]^T * B[k x n]     (+= when accumulate)
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k, bool accumulate = false);

void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

}  // namespace gped
