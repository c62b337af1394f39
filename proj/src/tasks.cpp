#include "hetlora/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlora/errors.hpp"

namespace hetlora {

using linalg::matmul;
using linalg::matmul_nt;
using linalg::matmul_tn;
using linalg::Rng;

namespace {

enum StreamTag : std::uint64_t { kBase = 1, kTargetLeft, kTargetRight, kComplexity, kClient, kEval };

// Orthonormal basis (columns) of the column space of a tall full-rank matrix.
Matrix orthonormal_columns(const Matrix& m) {
    return linalg::svd(m, m.cols()).u;
}

// Residual R = X(W₀ + ΔW)ᵀ − Y, computed as XW₀ᵀ + (XAᵀ)Bᵀ − Y for a LoRA pair.
struct Forward {
    Matrix xa;       // n×r
    Matrix residual; // n×d
};

Forward forward(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch) {
    if (batch.size() == 0) throw ArgumentError("empty batch");
    if (p.d() != base.d() || p.l() != base.l()) throw ShapeError("LoRA pair does not match the base model");
    Matrix xa = matmul_nt(batch.inputs, p.a());
    Matrix residual = matmul_nt(batch.inputs, base.w0());
    residual += matmul_nt(xa, p.b());
    residual -= batch.targets;
    return {std::move(xa), std::move(residual)};
}

double half_mean_sq(const Matrix& residual) {
    return 0.5 * linalg::sum_squares(residual) / static_cast<double>(residual.rows());
}

}  // namespace

InputSubspace parse_input_subspace(std::string_view name) {
    if (name == "ambient") return InputSubspace::ambient;
    if (name == "target") return InputSubspace::target;
    throw ArgumentError("unknown input subspace '" + std::string(name) + "' (expected ambient or target)");
}

std::string_view to_string(InputSubspace s) { return s == InputSubspace::ambient ? "ambient" : "target"; }

void SyntheticTaskSpec::validate() const {
    if (d == 0 || l == 0) throw ArgumentError("task: d and l must be positive");
    if (true_rank == 0 || true_rank > std::min(d, l))
        throw ArgumentError("task: true_rank must lie in [1, min(d, l)]");
    if (num_clients == 0) throw ArgumentError("task: num_clients must be positive");
    if (samples_per_client.empty() || (samples_per_client.size() != 1 && samples_per_client.size() != num_clients))
        throw ArgumentError("task: samples_per_client needs 1 or num_clients entries");
    for (std::size_t n : samples_per_client)
        if (n == 0) throw ArgumentError("task: samples_per_client entries must be positive");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ArgumentError("task: noise_std must be >= 0");
    if (!client_complexity.empty() && client_complexity.size() != 1 && client_complexity.size() != num_clients)
        throw ArgumentError("task: client_complexity needs 0, 1 or num_clients entries");
    for (std::size_t rho : client_complexity)
        if (rho == 0 || rho > true_rank) throw ArgumentError("task: client complexity must lie in [1, true_rank]");
    if (!(target_norm > 0.0) || !std::isfinite(target_norm)) throw ArgumentError("task: target_norm must be > 0");
    if (!(spectrum_decay > 0.0) || spectrum_decay > 1.0)
        throw ArgumentError("task: spectrum_decay must lie in (0, 1]");
    if (eval_samples == 0) throw ArgumentError("task: eval_samples must be positive");
}

std::size_t SyntheticTaskSpec::samples_for(std::size_t client) const {
    return samples_per_client.size() == 1 ? samples_per_client.front() : samples_per_client.at(client);
}

ClientDataset ClientDataset::select(std::span<const std::size_t> indices) const {
    return ClientDataset{inputs.select_rows(indices), targets.select_rows(indices)};
}

SyntheticTask generate_task(const SyntheticTaskSpec& spec) {
    spec.validate();
    const Rng root(spec.seed);
    const std::size_t d = spec.d, l = spec.l, rho = spec.true_rank;

    Rng base_rng = root.child({kBase});
    FrozenBaseModel base(base_rng.gaussian(d, l, 1.0 / std::sqrt(static_cast<double>(l))));

    // ΔW* = P·Q with random factors; P's columns shaped by the decay profile.
    Rng left_rng = root.child({kTargetLeft});
    Rng right_rng = root.child({kTargetRight});
    Matrix left = left_rng.gaussian(d, rho, 1.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < rho; ++k) left(i, k) *= std::pow(spec.spectrum_decay, static_cast<double>(k));
    const Matrix right = right_rng.gaussian(rho, l, 1.0);
    Matrix target = matmul(left, right);
    target *= spec.target_norm / linalg::frobenius_norm(target);

    // Row space of ΔW*; only needed for the `target` subspace mode.
    const Matrix row_space = orthonormal_columns(right.transpose()); // l×ρ*

    std::vector<std::size_t> complexity(spec.num_clients);
    Rng complexity_rng = root.child({kComplexity});
    for (std::size_t k = 0; k < spec.num_clients; ++k) {
        if (spec.client_complexity.empty()) {
            complexity[k] = 1 + complexity_rng.uniform_index(rho);
        } else {
            complexity[k] = spec.client_complexity.size() == 1 ? spec.client_complexity.front()
                                                               : spec.client_complexity[k];
        }
    }

    const Matrix effective = base.w0() + target;
    auto make_targets = [&](const Matrix& x, Rng& rng, double noise) {
        Matrix y = matmul_nt(x, effective);
        if (noise > 0.0) y += rng.gaussian(y.rows(), y.cols(), noise);
        return y;
    };

    std::vector<ClientDataset> clients;
    clients.reserve(spec.num_clients);
    for (std::size_t k = 0; k < spec.num_clients; ++k) {
        Rng rng = root.child({kClient, k});
        const std::size_t dim = complexity[k];
        Matrix basis = [&] {
            if (spec.subspace == InputSubspace::ambient) return orthonormal_columns(rng.gaussian(l, dim, 1.0));
            const Matrix mix = orthonormal_columns(rng.gaussian(rho, dim, 1.0));
            return matmul(row_space, mix);
        }();
        const Matrix z = rng.gaussian(spec.samples_for(k), dim, 1.0);
        Matrix x = matmul_nt(z, basis);
        Matrix y = make_targets(x, rng, spec.noise_std);
        clients.push_back(ClientDataset{std::move(x), std::move(y)});
    }

    Rng eval_rng = root.child({kEval});
    Matrix eval_x = eval_rng.gaussian(spec.eval_samples, l, 1.0);
    Matrix eval_y = make_targets(eval_x, eval_rng, spec.eval_noise ? spec.noise_std : 0.0);

    return SyntheticTask{spec,
                         std::move(base),
                         std::move(target),
                         std::move(clients),
                         std::move(complexity),
                         ClientDataset{std::move(eval_x), std::move(eval_y)}};
}

double loss(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch) {
    return half_mean_sq(forward(p, base, batch).residual);
}

LoraGradient grad(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch) {
    return loss_and_grad(p, base, batch).grad;
}

LossAndGradient loss_and_grad(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch) {
    const Forward f = forward(p, base, batch);
    const double scale = 1.0 / static_cast<double>(batch.size());
    // dL/dΔW = (1/n) Rᵀ X;  gB = (dL/dΔW) Aᵀ = (1/n) Rᵀ (X Aᵀ);  gA = Bᵀ (dL/dΔW) = (1/n) (R B)ᵀ X.
    Matrix gb = matmul_tn(f.residual, f.xa);
    gb *= scale;
    Matrix ga = matmul_tn(matmul(f.residual, p.b()), batch.inputs);
    ga *= scale;
    return {half_mean_sq(f.residual), LoraGradient{std::move(gb), std::move(ga)}};
}

double dense_loss(const Matrix& delta, const FrozenBaseModel& base, const ClientDataset& batch) {
    if (batch.size() == 0) throw ArgumentError("empty batch");
    Matrix residual = matmul_nt(batch.inputs, base.w0() + delta);
    residual -= batch.targets;
    return half_mean_sq(residual);
}

Matrix dense_grad(const Matrix& delta, const FrozenBaseModel& base, const ClientDataset& batch) {
    if (batch.size() == 0) throw ArgumentError("empty batch");
    Matrix residual = matmul_nt(batch.inputs, base.w0() + delta);
    residual -= batch.targets;
    Matrix g = matmul_tn(residual, batch.inputs);
    g *= 1.0 / static_cast<double>(batch.size());
    return g;
}

DatasetMoments dataset_moments(const ClientDataset& data) {
    if (data.size() == 0) throw ArgumentError("empty dataset");
    const double scale = 1.0 / static_cast<double>(data.size());
    Matrix gram = matmul_tn(data.inputs, data.inputs);
    gram *= scale;
    Matrix cross = matmul_tn(data.targets, data.inputs);
    cross *= scale;
    return {std::move(gram), std::move(cross), linalg::sum_squares(data.targets) * scale};
}

double moment_loss(const Matrix& delta, const FrozenBaseModel& base, const DatasetMoments& m) {
    const Matrix w = base.w0() + delta;
    if (w.cols() != m.gram.rows() || w.rows() != m.cross.rows()) throw ShapeError("moments do not match the model");
    const Matrix wg = matmul(w, m.gram);
    double quad = 0.0, lin = 0.0;
    const auto wd = w.data(), wgd = wg.data(), cd = m.cross.data();
    for (std::size_t i = 0; i < wd.size(); ++i) {
        quad += wgd[i] * wd[i];
        lin += cd[i] * wd[i];
    }
    return std::max(0.0, 0.5 * quad - lin + 0.5 * m.target_sq);
}

double moment_loss(const LoraPair& p, const FrozenBaseModel& base, const DatasetMoments& m) {
    return moment_loss(reconstruct(p), base, m);
}

}  // namespace hetlora
