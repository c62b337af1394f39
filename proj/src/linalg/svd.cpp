#include "hetlora/linalg/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetlora/errors.hpp"
#include "hetlora/linalg/kernels.hpp"

namespace hetlora::linalg {

namespace {

// Column-major working copy: the rotations touch whole columns.
struct Columns {
    std::size_t rows;
    std::vector<std::vector<double>> cols;
};

Columns to_columns(const Matrix& m) {
    Columns c{m.rows(), std::vector<std::vector<double>>(m.cols(), std::vector<double>(m.rows()))};
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) c.cols[j][i] = m(i, j);
    return c;
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

void rotate(std::vector<double>& p, std::vector<double>& q, double c, double s) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double xp = p[i];
        const double xq = q[i];
        p[i] = c * xp - s * xq;
        q[i] = s * xp + c * xq;
    }
}

// Makes `v` orthonormal to every vector in `basis`, then normalises it.
// Returns false if nothing is left after projection.
bool orthonormalize_against(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
            const double proj = dot(v, b);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * b[i];
        }
    }
    const double norm = std::sqrt(dot(v, v));
    if (norm < 1e-8) return false;
    for (double& x : v) x /= norm;
    return true;
}

// Full thin SVD of a tall (rows ≥ cols) matrix.
SvdResult tall_svd(const Matrix& m, const SvdOptions& options) {
    const std::size_t n = m.cols();
    Columns g = to_columns(m);
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

    bool converged = false;
    std::size_t sweep = 0;
    for (; sweep < options.max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(g.cols[p], g.cols[p]);
                const double beta = dot(g.cols[q], g.cols[q]);
                const double gamma = dot(g.cols[p], g.cols[q]);
                if (gamma == 0.0 || std::abs(gamma) <= options.tolerance * std::sqrt(alpha * beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(g.cols[p], g.cols[q], c, s);
                rotate(v[p], v[q], c, s);
            }
        }
    }
    if (!converged) {
        throw NumericError("svd: Jacobi sweeps did not converge after " + std::to_string(sweep) + " iterations");
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(g.cols[j], g.cols[j]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    const double cutoff = (n == 0 ? 0.0 : sigma[order[0]]) * 1e-13;
    std::vector<std::vector<double>> u_cols;
    std::vector<std::size_t> missing;
    std::vector<double> sorted_sigma(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        sorted_sigma[k] = sigma[j];
        if (sigma[j] > cutoff && sigma[j] > 0.0) {
            std::vector<double> col = g.cols[j];
            for (double& x : col) x /= sigma[j];
            u_cols.push_back(std::move(col));
        } else {
            u_cols.emplace_back();
            missing.push_back(k);
        }
    }
    // Complete the left basis for (numerically) zero singular values.
    if (!missing.empty()) {
        std::vector<std::vector<double>> basis;
        for (const auto& c : u_cols)
            if (!c.empty()) basis.push_back(c);
        std::size_t e = 0;
        for (std::size_t k : missing) {
            while (true) {
                if (e >= g.rows) throw NumericError("svd: could not complete orthonormal left basis");
                std::vector<double> cand(g.rows, 0.0);
                cand[e++] = 1.0;
                if (orthonormalize_against(cand, basis)) {
                    basis.push_back(cand);
                    u_cols[k] = std::move(cand);
                    break;
                }
            }
        }
    }

    Matrix u(g.rows, n);
    Matrix vt(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < g.rows; ++i) u(i, k) = u_cols[k][i];
        const auto& vk = v[order[k]];
        for (std::size_t j = 0; j < n; ++j) vt(k, j) = vk[j];
    }
    return SvdResult{std::move(u), std::move(sorted_sigma), std::move(vt)};
}

}  // namespace

Matrix SvdResult::reconstruct() const {
    Matrix scaled = u;
    for (std::size_t i = 0; i < scaled.rows(); ++i)
        for (std::size_t k = 0; k < scaled.cols(); ++k) scaled(i, k) *= singular_values[k];
    return matmul(scaled, vt);
}

SvdResult svd(const Matrix& m, std::size_t k, const SvdOptions& options) {
    const std::size_t full = std::min(m.rows(), m.cols());
    if (k == 0 || k > full) {
        throw ArgumentError("svd: k = " + std::to_string(k) + " outside [1, " + std::to_string(full) + "]");
    }
    SvdResult whole = [&] {
        if (m.rows() >= m.cols()) return tall_svd(m, options);
        SvdResult t = tall_svd(m.transpose(), options);
        return SvdResult{t.vt.transpose(), std::move(t.singular_values), t.u.transpose()};
    }();
    if (k == full) return whole;
    whole.singular_values.resize(k);
    return SvdResult{whole.u.col_block(0, k), std::move(whole.singular_values), whole.vt.row_block(0, k)};
}

}  // namespace hetlora::linalg
