// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "hetlora/linalg.hpp"
#include "hetlora/lora.hpp"

namespace {

using hetlora::linalg::Matrix;
using hetlora::linalg::Rng;

Matrix random(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    return rng.gaussian(rows, cols, 1.0);
}

template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random(n, n, 1), b = random(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void BM_matmul_nt(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random(n, n, 3), b = random(n, n, 4);
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <double (*Kernel)(const Matrix&)>
void BM_sum_squares(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix m = random(n, n, 5);
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(m));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

void BM_svd(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix m = random(2 * n, n, 6);
    for (auto _ : state) benchmark::DoNotOptimize(hetlora::linalg::svd(m, n));
}

// Eval-set forward pass at benchmark dimensions (1000 samples, d=64, l=32).
void BM_eval_forward(benchmark::State& state) {
    const Matrix x = random(1000, 32, 7), w = random(64, 32, 8);
    for (auto _ : state) benchmark::DoNotOptimize(hetlora::linalg::matmul_nt(x, w));
}

namespace serial = hetlora::linalg::serial;
namespace parallel = hetlora::linalg::parallel;

BENCHMARK(BM_matmul<serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul_nt<serial::matmul_nt>)->Name("matmul_nt/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul_nt<parallel::matmul_nt>)->Name("matmul_nt/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_sum_squares<serial::sum_squares>)->Name("sum_squares/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_sum_squares<parallel::sum_squares>)->Name("sum_squares/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_svd)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_eval_forward);

}  // namespace

BENCHMARK_MAIN();
