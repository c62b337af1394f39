#pragma once

#include "hetlora/linalg/matrix.hpp"

// Dense kernels in two flavours.
//
// `serial::` is the single-threaded reference. `parallel::` splits the output
// rows (or reduction blocks) across OpenMP threads. Every output entry is
// accumulated in the same order by both, so the two agree bit for bit at any
// thread count. The unqualified functions in `linalg::` pick the parallel
// kernel for large operands and the serial one otherwise.

namespace hetlora::linalg {

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
double sum_squares(const Matrix& m);

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
double sum_squares(const Matrix& m);

}  // namespace parallel

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double sum_squares(const Matrix& m);
double frobenius_norm(const Matrix& m);

/// Flop count (rows·inner·cols) above which the dispatching kernels go parallel.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 16;

/// Number of entries summed serially before the fixed-order pairwise tree takes over.
inline constexpr std::size_t kReductionBlock = 256;

}  // namespace hetlora::linalg
