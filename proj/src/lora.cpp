#include "hetlora/lora.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlora/errors.hpp"

namespace hetlora {

using linalg::matmul;
using linalg::matmul_nt;
using linalg::matmul_tn;

LoraPair::LoraPair(Matrix b, Matrix a) : b_(std::move(b)), a_(std::move(a)) {
    if (b_.cols() != a_.rows()) {
        throw ShapeError("LoraPair: B is " + linalg::shape_string(b_) + " but A is " + linalg::shape_string(a_));
    }
}

LoraPair LoraPair::zeros(std::size_t d, std::size_t l, std::size_t rank) {
    return LoraPair(Matrix(d, rank), Matrix(rank, l));
}

void LoraPair::sgd_step(const Matrix& grad_b, const Matrix& grad_a, double lr) {
    b_.add_scaled(grad_b, -lr);
    a_.add_scaled(grad_a, -lr);
}

LoraPair truncate(const LoraPair& p, std::size_t new_rank) {
    if (new_rank == 0 || new_rank > p.rank()) {
        throw ArgumentError("truncate: rank " + std::to_string(new_rank) + " outside [1, " +
                            std::to_string(p.rank()) + "]");
    }
    if (new_rank == p.rank()) return p;
    return LoraPair(p.b().col_block(0, new_rank), p.a().row_block(0, new_rank));
}

LoraPair zero_pad(const LoraPair& p, std::size_t target_rank) {
    if (target_rank < p.rank()) {
        throw ArgumentError("zero_pad: target rank " + std::to_string(target_rank) + " below current rank " +
                            std::to_string(p.rank()));
    }
    if (target_rank == p.rank()) return p;
    Matrix b(p.d(), target_rank);
    Matrix a(target_rank, p.l());
    for (std::size_t i = 0; i < p.d(); ++i)
        for (std::size_t k = 0; k < p.rank(); ++k) b(i, k) = p.b()(i, k);
    for (std::size_t k = 0; k < p.rank(); ++k)
        for (std::size_t j = 0; j < p.l(); ++j) a(k, j) = p.a()(k, j);
    return LoraPair(std::move(b), std::move(a));
}

Matrix reconstruct(const LoraPair& p) { return matmul(p.b(), p.a()); }

double sparsity_score(const LoraPair& p) {
    const Matrix btb = matmul_tn(p.b(), p.b());
    const Matrix aat = matmul_nt(p.a(), p.a());
    // Both Gram matrices are symmetric, so tr(XY) is the entrywise inner product.
    double trace = 0.0;
    for (std::size_t k = 0; k < btb.size(); ++k) trace += btb.data()[k] * aat.data()[k];
    return std::sqrt(std::max(0.0, trace));
}

LoraPair aggregate_pairs(std::span<const LoraPair> pairs, std::span<const double> weights) {
    if (pairs.empty()) throw ArgumentError("aggregate_pairs: no pairs");
    if (weights.size() != pairs.size()) {
        throw ArgumentError("aggregate_pairs: " + std::to_string(pairs.size()) + " pairs but " +
                            std::to_string(weights.size()) + " weights");
    }
    const std::size_t d = pairs.front().d();
    const std::size_t l = pairs.front().l();
    std::size_t r_max = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (pairs[k].d() != d || pairs[k].l() != l) throw ArgumentError("aggregate_pairs: mismatched d or l");
        if (!std::isfinite(weights[k])) throw ArgumentError("aggregate_pairs: non-finite weight");
        r_max = std::max(r_max, pairs[k].rank());
    }

    Matrix b(d, r_max);
    Matrix a(r_max, l);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double w = weights[k];
        const LoraPair& p = pairs[k];
        // Entries past p.rank() are the zero padding and receive nothing.
        for (std::size_t i = 0; i < d; ++i) {
            auto src = p.b().row(i);
            auto dst = b.row(i);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += w * src[c];
        }
        for (std::size_t r = 0; r < p.rank(); ++r) {
            auto src = p.a().row(r);
            auto dst = a.row(r);
            for (std::size_t j = 0; j < l; ++j) dst[j] += w * src[j];
        }
    }
    linalg::ensure_finite(b, "aggregate_pairs");
    linalg::ensure_finite(a, "aggregate_pairs");
    return LoraPair(std::move(b), std::move(a));
}

SvdSplit parse_svd_split(std::string_view name) {
    if (name == "balanced") return SvdSplit::balanced;
    if (name == "left") return SvdSplit::left;
    if (name == "right") return SvdSplit::right;
    throw ArgumentError("unknown svd split '" + std::string(name) + "' (expected balanced, left or right)");
}

std::string_view to_string(SvdSplit split) {
    switch (split) {
        case SvdSplit::balanced: return "balanced";
        case SvdSplit::left: return "left";
        case SvdSplit::right: return "right";
    }
    return "balanced";
}

LoraPair refactor_svd(const Matrix& delta, std::size_t rank, SvdSplit split) {
    return refactor_svd(linalg::svd(delta, rank), rank, split);
}

LoraPair refactor_svd(const linalg::SvdResult& s, std::size_t rank, SvdSplit split) {
    if (rank == 0 || rank > s.rank())
        throw ArgumentError("cannot refactor to rank " + std::to_string(rank) + " from " + std::to_string(s.rank()) +
                            " singular triplets");
    Matrix b = s.u.col_block(0, rank);
    Matrix a = s.vt.row_block(0, rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const double sigma = s.singular_values[k];
        double left = 1.0;
        double right = 1.0;
        switch (split) {
            case SvdSplit::balanced: left = right = std::sqrt(sigma); break;
            case SvdSplit::left: left = sigma; break;
            case SvdSplit::right: right = sigma; break;
        }
        for (std::size_t i = 0; i < b.rows(); ++i) b(i, k) *= left;
        for (std::size_t j = 0; j < a.cols(); ++j) a(k, j) *= right;
    }
    return LoraPair(std::move(b), std::move(a));
}

}  // namespace hetlora
