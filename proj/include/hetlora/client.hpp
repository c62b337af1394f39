#pragma once

#include <cstddef>
#include <functional>

#include "hetlora/linalg/rng.hpp"
#include "hetlora/lora.hpp"
#include "hetlora/tasks.hpp"

namespace hetlora {

struct LocalTrainConfig {
    std::size_t local_steps = 5; ///< τ
    std::size_t batch_size = 8;
    double learning_rate = 0.01;
    double lambda = 0.0; ///< weight of the tail-block regulariser
    double gamma = 1.0;  ///< decay factor in (0, 1]; 1 disables pruning

    void validate() const;
};

/// Ranks kept when a rank-r adapter is pruned with decay γ: max(1, ⌊γ·r⌋).
std::size_t pruned_rank(std::size_t rank, double gamma);

/// ‖B[:, keep:r]‖_F · ‖A[keep:r, :]‖_F with keep = pruned_rank(r, γ).
/// Zero when the tail is empty (keep == r).
double tail_block_norm(const LoraPair& p, double gamma);

/// loss(p) + λ·tail_block_norm(p, γ)
double regularized_loss(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch, double lambda,
                        double gamma);

/// Gradient of `regularized_loss`. On the tail block the regulariser
/// contributes λ(‖A_t‖/‖B_t‖)B_t and λ(‖B_t‖/‖A_t‖)A_t; if either tail norm is
/// zero the subgradient 0 is used.
LossAndGradient regularized_loss_and_grad(const LoraPair& p, const FrozenBaseModel& base,
                                          const ClientDataset& batch, double lambda, double gamma);

/// One client of the federation. The rank only ever decreases.
struct ClientState {
    std::size_t id = 0;
    std::size_t current_rank = 1;
    std::reference_wrapper<const ClientDataset> dataset;
    linalg::Rng rng; ///< batch sampling; owned, advances across rounds
};

struct LocalTrainResult {
    LoraPair pair;
    std::size_t new_rank = 0;
    bool pruned = false;
    double tail_received = 0.0;
    double tail_trained = 0.0;
    double last_batch_loss = 0.0;
};

/// τ steps of mini-batch SGD on the regularised objective starting from the
/// received module, then the self-pruning rule: if the trained tail norm is
/// strictly below the received one, truncate to pruned_rank(r, γ). The new
/// rank is written back to `state`.
///
/// Throws TrainingError (with the step index) if the loss or parameters
/// become non-finite.
LocalTrainResult local_train(ClientState& state, const LoraPair& received, const FrozenBaseModel& base,
                             const LocalTrainConfig& cfg);

}  // namespace hetlora
