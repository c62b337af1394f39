#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "hetlora/linalg.hpp"
#include "hetlora/lora.hpp"

namespace hetlora {

/// Where client inputs live.
///
/// ambient: client k's ρ_k-dimensional subspace is drawn uniformly from R^l.
/// target:  the subspace is drawn inside the row space of ΔW*, so clients
///          only ever see directions the target acts on, while evaluation
///          still covers all of R^l.
enum class InputSubspace { ambient, target };

InputSubspace parse_input_subspace(std::string_view name);
std::string_view to_string(InputSubspace s);

struct SyntheticTaskSpec {
    std::size_t d = 64;
    std::size_t l = 32;
    std::size_t true_rank = 8;
    std::size_t num_clients = 100;
    /// One entry applies to every client; otherwise one entry per client.
    std::vector<std::size_t> samples_per_client{30};
    double noise_std = 0.1;
    /// Per-client intrinsic input rank ρ_k. Empty: drawn uniformly from
    /// [1, true_rank]. One entry: shared by all clients. Else one per client.
    std::vector<std::size_t> client_complexity;
    /// ‖ΔW*‖_F after construction.
    double target_norm = 1.0;
    /// Column i of ΔW*'s left factor is scaled by decay^i, which controls how
    /// quickly the target's singular values fall off. 1 gives no shaping.
    double spectrum_decay = 1.0;
    InputSubspace subspace = InputSubspace::ambient;
    std::size_t eval_samples = 1000;
    /// Add label noise to the held-out targets too. Off: eval loss measures
    /// the error against the clean target map.
    bool eval_noise = false;
    std::uint64_t seed = 0;

    /// Throws ArgumentError on the first violated constraint.
    void validate() const;

    std::size_t samples_for(std::size_t client) const;
};

/// Samples stored row-wise: inputs n×l, targets n×d.
struct ClientDataset {
    Matrix inputs;
    Matrix targets;

    std::size_t size() const noexcept { return inputs.rows(); }

    /// Sub-batch made of the listed sample indices, in order.
    ClientDataset select(std::span<const std::size_t> indices) const;
};

/// Frozen pretrained weight W₀ (d×l).
class FrozenBaseModel {
public:
    explicit FrozenBaseModel(Matrix w0) : w0_(std::move(w0)) {}
    const Matrix& w0() const noexcept { return w0_; }
    std::size_t d() const noexcept { return w0_.rows(); }
    std::size_t l() const noexcept { return w0_.cols(); }

private:
    Matrix w0_;
};

struct SyntheticTask {
    SyntheticTaskSpec spec;
    FrozenBaseModel base;
    Matrix target_delta;                 ///< ΔW*, exact rank true_rank
    std::vector<ClientDataset> clients;
    std::vector<std::size_t> complexity; ///< ρ_k actually used per client
    ClientDataset eval;
};

SyntheticTask generate_task(const SyntheticTaskSpec& spec);

struct LoraGradient {
    Matrix b; ///< d×r
    Matrix a; ///< r×l
};

/// (1/n) Σ ½‖(W₀ + BA)x − y‖² over the batch.
double loss(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch);

/// Gradient of `loss` with respect to (B, A).
LoraGradient grad(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch);

struct LossAndGradient {
    double loss;
    LoraGradient grad;
};

/// One forward pass shared between the loss value and its gradient.
LossAndGradient loss_and_grad(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch);

/// Second moments of a fixed dataset: G = XᵀX/n (l×l), C = YᵀX/n (d×l),
/// s = ‖Y‖²_F/n. They determine the loss of any weight W exactly:
/// loss = ½tr(WGWᵀ) − tr(WCᵀ) + ½s. Used for the held-out set, where the
/// same samples are evaluated every round.
struct DatasetMoments {
    Matrix gram;
    Matrix cross;
    double target_sq = 0.0;
};

DatasetMoments dataset_moments(const ClientDataset& data);

/// `loss` / `dense_loss` evaluated through the moments. Agrees with the
/// per-sample form up to rounding.
double moment_loss(const LoraPair& p, const FrozenBaseModel& base, const DatasetMoments& m);
double moment_loss(const Matrix& delta, const FrozenBaseModel& base, const DatasetMoments& m);

/// Same objective for a dense additive update ΔW (full fine-tuning).
double dense_loss(const Matrix& delta, const FrozenBaseModel& base, const ClientDataset& batch);
Matrix dense_grad(const Matrix& delta, const FrozenBaseModel& base, const ClientDataset& batch);

}  // namespace hetlora
