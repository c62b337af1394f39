#pragma once

// Reference computations for tests. Everything here is written directly from
// the definitions and shares no code path with the library kernels.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "hetlora/linalg.hpp"
#include "hetlora/lora.hpp"
#include "hetlora/tasks.hpp"

namespace oracle {

using hetlora::ClientDataset;
using hetlora::FrozenBaseModel;
using hetlora::LoraPair;
using hetlora::linalg::Matrix;

inline Matrix triple_loop_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double s = 0.0L;
            for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
            c(i, j) = static_cast<double>(s);
        }
    return c;
}

inline Matrix product(const LoraPair& p) { return triple_loop_matmul(p.b(), p.a()); }

inline double frobenius(const Matrix& m) {
    long double s = 0.0L;
    for (double x : m.data()) s += static_cast<long double>(x) * x;
    return static_cast<double>(std::sqrt(s));
}

/// (1/n) Σ ½‖(W₀ + ΔW)x − y‖², one sample at a time.
inline double per_sample_loss(const Matrix& delta, const FrozenBaseModel& base, const ClientDataset& batch) {
    const std::size_t d = base.d(), l = base.l(), n = batch.size();
    long double total = 0.0L;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < d; ++i) {
            long double pred = 0.0L;
            for (std::size_t j = 0; j < l; ++j)
                pred += (static_cast<long double>(base.w0()(i, j)) + delta(i, j)) * batch.inputs(s, j);
            const long double r = pred - batch.targets(s, i);
            total += 0.5L * r * r;
        }
    }
    return static_cast<double>(total / static_cast<long double>(n));
}

inline double per_sample_loss(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch) {
    return per_sample_loss(product(p), base, batch);
}

/// ‖B[:, keep:]‖_F·‖A[keep:, :]‖_F with keep = max(1, ⌊γr⌋), from the definition.
inline double tail_product(const LoraPair& p, double gamma) {
    const std::size_t r = p.rank();
    std::size_t keep = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(r) + 1e-9));
    if (keep < 1) keep = 1;
    if (keep >= r) return 0.0;
    long double sb = 0.0L, sa = 0.0L;
    for (std::size_t i = 0; i < p.d(); ++i)
        for (std::size_t k = keep; k < r; ++k) sb += static_cast<long double>(p.b()(i, k)) * p.b()(i, k);
    for (std::size_t k = keep; k < r; ++k)
        for (std::size_t j = 0; j < p.l(); ++j) sa += static_cast<long double>(p.a()(k, j)) * p.a()(k, j);
    return static_cast<double>(std::sqrt(sb) * std::sqrt(sa));
}

/// Central difference (f(x + εD) − f(x − εD)) / 2ε along direction D = (db, da).
inline double directional_derivative(const std::function<double(const LoraPair&)>& f, const LoraPair& p,
                                     const Matrix& db, const Matrix& da, double eps) {
    Matrix bp = p.b(), bm = p.b(), ap = p.a(), am = p.a();
    bp.add_scaled(db, eps);
    bm.add_scaled(db, -eps);
    ap.add_scaled(da, eps);
    am.add_scaled(da, -eps);
    return (f(LoraPair(bp, ap)) - f(LoraPair(bm, am))) / (2.0 * eps);
}

inline double inner(const Matrix& a, const Matrix& b) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += static_cast<long double>(a.data()[i]) * b.data()[i];
    return static_cast<double>(s);
}

inline LoraPair random_pair(hetlora::linalg::Rng& rng, std::size_t d, std::size_t l, std::size_t r,
                            double stddev = 1.0) {
    Matrix b = rng.gaussian(d, r, stddev);
    Matrix a = rng.gaussian(r, l, stddev);
    return LoraPair(std::move(b), std::move(a));
}

inline ClientDataset random_dataset(hetlora::linalg::Rng& rng, std::size_t n, std::size_t d, std::size_t l) {
    Matrix x = rng.gaussian(n, l, 1.0);
    Matrix y = rng.gaussian(n, d, 1.0);
    return ClientDataset{std::move(x), std::move(y)};
}

}  // namespace oracle
