#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "hetlora/linalg.hpp"

namespace hetlora {

using linalg::Matrix;

/// Low-rank adapter ΔW = B·A with B: d×r and A: r×l.
///
/// No α/r scaling constant is applied anywhere; ΔW is exactly the product.
class LoraPair {
public:
    /// Throws ShapeError unless b.cols() == a.rows().
    LoraPair(Matrix b, Matrix a);

    /// B = 0 (d×r), A = 0 (r×l).
    static LoraPair zeros(std::size_t d, std::size_t l, std::size_t rank);

    const Matrix& b() const noexcept { return b_; }
    const Matrix& a() const noexcept { return a_; }

    std::size_t rank() const noexcept { return b_.cols(); }
    std::size_t d() const noexcept { return b_.rows(); }
    std::size_t l() const noexcept { return a_.cols(); }

    /// B -= lr·grad_b, A -= lr·grad_a. Gradients must match the factor shapes.
    void sgd_step(const Matrix& grad_b, const Matrix& grad_a, double lr);

    friend bool operator==(const LoraPair&, const LoraPair&) = default;

private:
    Matrix b_;
    Matrix a_;
};

/// Keeps the first `new_rank` columns of B and rows of A. 1 ≤ new_rank ≤ rank.
LoraPair truncate(const LoraPair& p, std::size_t new_rank);

/// Appends zero columns to B and zero rows of A up to `target_rank` ≥ rank.
LoraPair zero_pad(const LoraPair& p, std::size_t target_rank);

/// ΔW = B·A as a d×l matrix.
Matrix reconstruct(const LoraPair& p);

/// ‖B·A‖_F, i.e. the Euclidean norm of the singular values of ΔW.
///
/// Evaluated through ‖BA‖²_F = tr((BᵀB)(AAᵀ)) so only r×r intermediates are
/// formed; the d×l product is never materialised.
double sparsity_score(const LoraPair& p);

/// Weighted sum of factors after zero-padding every pair to the largest rank
/// in the batch: (Σ wₖBₖ, Σ wₖAₖ). The factors are averaged, not the products,
/// so the result carries all cross-client terms BᵢAⱼ.
LoraPair aggregate_pairs(std::span<const LoraPair> pairs, std::span<const double> weights);

/// How singular values are split between the factors when re-factoring.
enum class SvdSplit { balanced, left, right };

SvdSplit parse_svd_split(std::string_view name);
std::string_view to_string(SvdSplit split);

/// Best rank-r factorisation of `delta` from its truncated SVD UΣVᵀ.
/// balanced: B = U√Σ, A = √ΣVᵀ; left: B = UΣ, A = Vᵀ; right: B = U, A = ΣVᵀ.
LoraPair refactor_svd(const Matrix& delta, std::size_t rank, SvdSplit split = SvdSplit::balanced);

/// Same, from an SVD computed once with at least `rank` triplets. Equal to
/// refactor_svd(delta, rank, split) when `s` is svd(delta, k) for k ≥ rank.
LoraPair refactor_svd(const linalg::SvdResult& s, std::size_t rank, SvdSplit split = SvdSplit::balanced);

}  // namespace hetlora
