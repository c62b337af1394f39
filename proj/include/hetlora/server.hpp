#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hetlora/lora.hpp"

namespace hetlora {

enum class Aggregation { simple, sparsity_weighted };

Aggregation parse_aggregation(std::string_view name);
std::string_view to_string(Aggregation a);

/// Initial per-client ranks, each within [r_min, r_max].
struct RankAssignment {
    std::size_t r_min = 1;
    std::size_t r_max = 1;
    std::vector<std::size_t> ranks;
};

/// Truncated power law on the integers [r_min, r_max]: pmf(r) ∝ r^(α−1).
/// α < 1 skews towards small ranks; α = 1 is uniform.
std::vector<double> rank_pmf(std::size_t r_min, std::size_t r_max, double alpha);

/// Draws each client's rank i.i.d. from `rank_pmf`. Deterministic in `seed`.
RankAssignment assign_ranks(std::size_t num_clients, std::size_t r_min, std::size_t r_max, double alpha,
                            std::uint64_t seed);

/// m distinct client ids drawn uniformly, returned in ascending order.
/// Deterministic in (seed, round).
std::vector<std::size_t> select_clients(std::size_t num_clients, std::size_t m, std::size_t round,
                                        std::uint64_t seed);

struct ClientUpdate {
    std::size_t client = 0;
    LoraPair pair;
    std::size_t samples = 0; ///< only read when size weighting is enabled
};

/// Server side of the protocol: the global pair plus the rank registry.
///
/// Invariant: global_pair.rank() == max over registry.
class ServerState {
public:
    /// `initial` must have rank ≥ max(client_ranks); it is truncated to that max.
    ServerState(const LoraPair& initial, std::vector<std::size_t> client_ranks, Aggregation strategy,
                bool weight_by_size = false);

    const LoraPair& global_pair() const noexcept { return global_; }
    std::size_t global_rank() const noexcept { return global_.rank(); }
    std::size_t round() const noexcept { return round_; }
    Aggregation strategy() const noexcept { return strategy_; }
    bool weight_by_size() const noexcept { return weight_by_size_; }
    std::span<const std::size_t> client_ranks() const noexcept { return registry_; }
    std::size_t client_rank(std::size_t client) const { return registry_.at(client); }

    friend ServerState aggregate(ServerState state, std::span<const ClientUpdate> updates);

private:
    LoraPair global_;
    std::size_t round_ = 0;
    Aggregation strategy_;
    bool weight_by_size_;
    std::vector<std::size_t> registry_;
};

/// Truncation of the global pair to a client's rank.
/// Throws ProtocolError if `client_rank` exceeds the global rank.
LoraPair distribute(const ServerState& state, std::size_t client_rank);

/// Aggregation weights on the simplex. simple: 1/m each. sparsity_weighted:
/// proportional to sparsity_score (optionally times sample count), falling
/// back to uniform when every score is zero.
std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates, Aggregation strategy,
                                        bool weight_by_size = false);

/// Replaces the global pair by the weighted factor aggregate of `updates`,
/// records each sender's (possibly pruned) rank, and pads or truncates the
/// global pair to the new maximum registered rank.
ServerState aggregate(ServerState state, std::span<const ClientUpdate> updates);

}  // namespace hetlora
