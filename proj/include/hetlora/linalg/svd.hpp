#pragma once

#include <cstddef>
#include <vector>

#include "hetlora/linalg/matrix.hpp"

namespace hetlora::linalg {

/// Leading singular triplets of a matrix M ≈ u · diag(singular_values) · vt.
struct SvdResult {
    Matrix u;                            ///< rows(M) × k, orthonormal columns
    std::vector<double> singular_values; ///< length k, non-increasing, non-negative
    Matrix vt;                           ///< k × cols(M), orthonormal rows

    std::size_t rank() const noexcept { return singular_values.size(); }

    /// u · diag(σ) · vt
    Matrix reconstruct() const;
};

struct SvdOptions {
    std::size_t max_sweeps = 80;
    /// A column pair counts as orthogonal once |⟨p,q⟩| ≤ tolerance·‖p‖‖q‖.
    double tolerance = 1e-15;
};

/// Top-k SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Requires 1 ≤ k ≤ min(rows, cols). Left singular vectors belonging to zero
/// singular values are completed to an orthonormal set, so `u` is always
/// orthonormal. Throws NumericError when the sweep limit is reached.
SvdResult svd(const Matrix& m, std::size_t k, const SvdOptions& options = {});

}  // namespace hetlora::linalg
