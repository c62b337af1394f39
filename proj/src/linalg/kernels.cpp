#include "hetlora/linalg/kernels.hpp"

#include <cmath>
#include <vector>

#include <omp.h>

#include "hetlora/errors.hpp"

namespace hetlora::linalg {

namespace {

void check_inner(std::size_t lhs, std::size_t rhs, const char* op, const Matrix& a, const Matrix& b) {
    if (lhs != rhs) throw ShapeError(std::string(op) + ": " + shape_string(a) + " and " + shape_string(b));
}

// Row kernels shared by both flavours. Each writes one output row and
// accumulates over the inner index in ascending order.

void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = a(i, k);
        auto src = b.row(k);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * src[j];
    }
}

void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double aki = a(k, i);
        auto src = b.row(k);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aki * src[j];
    }
}

void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto lhs = a.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) {
        auto rhs = b.row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < lhs.size(); ++k) acc += lhs[k] * rhs[k];
        dst[j] = acc;
    }
}

double block_sum_squares(std::span<const double> data, std::size_t block) {
    const std::size_t first = block * kReductionBlock;
    const std::size_t last = std::min(data.size(), first + kReductionBlock);
    double acc = 0.0;
    for (std::size_t k = first; k < last; ++k) acc += data[k] * data[k];
    return acc;
}

// Pairwise reduction with a shape that depends only on the number of blocks.
double tree_reduce(std::vector<double>& partial) {
    std::size_t n = partial.size();
    while (n > 1) {
        const std::size_t half = (n + 1) / 2;
        for (std::size_t k = 0; k + half < n; ++k) partial[k] += partial[k + half];
        n = half;
    }
    return partial.empty() ? 0.0 : partial[0];
}

std::size_t num_blocks(const Matrix& m) { return (m.size() + kReductionBlock - 1) / kReductionBlock; }

template <typename RowKernel>
Matrix run_serial(std::size_t rows, std::size_t cols, RowKernel&& kernel, const char* name) {
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) kernel(out, i);
    ensure_finite(out, name);
    return out;
}

template <typename RowKernel>
Matrix run_parallel(std::size_t rows, std::size_t cols, RowKernel&& kernel, const char* name) {
    Matrix out(rows, cols);
    const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) kernel(out, static_cast<std::size_t>(i));
    ensure_finite(out, name);
    return out;
}

bool go_parallel(std::size_t work) { return work >= kParallelWorkThreshold && !omp_in_parallel(); }

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul", a, b);
    return run_serial(a.rows(), b.cols(), [&](Matrix& out, std::size_t i) { matmul_row(a, b, out, i); }, "matmul");
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn", a, b);
    return run_serial(a.cols(), b.cols(), [&](Matrix& out, std::size_t i) { matmul_tn_row(a, b, out, i); },
                      "matmul_tn");
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt", a, b);
    return run_serial(a.rows(), b.rows(), [&](Matrix& out, std::size_t i) { matmul_nt_row(a, b, out, i); },
                      "matmul_nt");
}

double sum_squares(const Matrix& m) {
    std::vector<double> partial(num_blocks(m));
    for (std::size_t blk = 0; blk < partial.size(); ++blk) partial[blk] = block_sum_squares(m.data(), blk);
    return tree_reduce(partial);
}

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul", a, b);
    return run_parallel(a.rows(), b.cols(), [&](Matrix& out, std::size_t i) { matmul_row(a, b, out, i); },
                        "matmul");
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn", a, b);
    return run_parallel(a.cols(), b.cols(), [&](Matrix& out, std::size_t i) { matmul_tn_row(a, b, out, i); },
                        "matmul_tn");
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt", a, b);
    return run_parallel(a.rows(), b.rows(), [&](Matrix& out, std::size_t i) { matmul_nt_row(a, b, out, i); },
                        "matmul_nt");
}

double sum_squares(const Matrix& m) {
    std::vector<double> partial(num_blocks(m));
    const auto n = static_cast<std::ptrdiff_t>(partial.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < n; ++blk)
        partial[static_cast<std::size_t>(blk)] = block_sum_squares(m.data(), static_cast<std::size_t>(blk));
    return tree_reduce(partial);
}

}  // namespace parallel

Matrix matmul(const Matrix& a, const Matrix& b) {
    return go_parallel(a.rows() * a.cols() * b.cols()) ? parallel::matmul(a, b) : serial::matmul(a, b);
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    return go_parallel(a.rows() * a.cols() * b.cols()) ? parallel::matmul_tn(a, b) : serial::matmul_tn(a, b);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    return go_parallel(a.rows() * a.cols() * b.rows()) ? parallel::matmul_nt(a, b) : serial::matmul_nt(a, b);
}

double sum_squares(const Matrix& m) {
    return go_parallel(m.size() * 16) ? parallel::sum_squares(m) : serial::sum_squares(m);
}

double frobenius_norm(const Matrix& m) {
    const double norm = std::sqrt(sum_squares(m));
    if (!std::isfinite(norm)) throw NumericError("frobenius_norm: overflow on " + shape_string(m));
    return norm;
}

}  // namespace hetlora::linalg
