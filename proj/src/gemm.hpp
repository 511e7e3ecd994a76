#pragma once

// Row-major dense kernels used by the tensor ops. All accumulate into C.

#include <cstddef>

namespace gastkit::nn::kernel {

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

}  // namespace gastkit::nn::kernel
