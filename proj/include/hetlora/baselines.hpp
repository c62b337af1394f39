#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetlora/client.hpp"
#include "hetlora/lora.hpp"
#include "hetlora/server.hpp"
#include "hetlora/tasks.hpp"

namespace hetlora {

enum class StrategyKind { hetlora, homlora, full_ft, recon_svd };

/// Which federated method a run uses. `rank` is only meaningful for homlora.
struct StrategyTag {
    StrategyKind kind = StrategyKind::hetlora;
    std::size_t rank = 0;

    static StrategyTag hetlora() { return {StrategyKind::hetlora, 0}; }
    static StrategyTag homlora(std::size_t r) { return {StrategyKind::homlora, r}; }
    static StrategyTag full_ft() { return {StrategyKind::full_ft, 0}; }
    static StrategyTag recon_svd() { return {StrategyKind::recon_svd, 0}; }

    /// Accepts "hetlora", "full_ft", "recon_svd", "homlora:R" and "homlora(R)".
    static StrategyTag parse(std::string_view text);
    std::string to_string() const;

    friend bool operator==(const StrategyTag&, const StrategyTag&) = default;
};

/// Everything about a federated run except the task and the seed.
struct ProtocolConfig {
    StrategyTag strategy;
    std::size_t r_min = 2;
    std::size_t r_max = 16;
    double alpha = 0.1; ///< power-law exponent of the rank distribution
    /// Explicit initial client ranks. Overrides the power-law draw when non-empty.
    std::vector<std::size_t> initial_ranks;
    std::size_t clients_per_round = 10;
    std::size_t rounds = 200;
    LocalTrainConfig local;
    Aggregation aggregation = Aggregation::sparsity_weighted;
    bool weight_by_size = false;
    /// Initial global pair: B = 0, A ~ N(0, init_std²).
    double init_std = 0.1;
    SvdSplit svd_split = SvdSplit::balanced;

    /// Throws ArgumentError. `d`, `l` and `num_clients` come from the task.
    void validate(std::size_t d, std::size_t l, std::size_t num_clients) const;
};

/// Parameters exchanged for one rank-r adapter in one direction.
constexpr std::uint64_t lora_param_count(std::size_t rank, std::size_t d, std::size_t l) {
    return static_cast<std::uint64_t>(rank) * (d + l);
}
constexpr std::uint64_t dense_param_count(std::size_t d, std::size_t l) { return static_cast<std::uint64_t>(d) * l; }

/// r(d + l) / (d·l): adapter size relative to the dense weight.
double lora_param_fraction(std::size_t rank, std::size_t d, std::size_t l);

struct ParticipantRecord {
    std::size_t client = 0;
    std::size_t rank_received = 0;
    std::size_t rank_sent = 0;
    bool pruned = false;
};

struct RoundRecord {
    std::size_t round = 0; ///< 1-based; round t is the state after t aggregations
    double eval_loss = 0.0;
    std::size_t global_rank = 0; ///< 0 for the dense full fine-tuning state
    double mean_client_rank = 0.0;
    std::vector<ParticipantRecord> participants;
    std::uint64_t params_down = 0;
    std::uint64_t params_up = 0;
    std::uint64_t params_cumulative = 0;
    std::optional<double> wall_ms; ///< only filled when timing is requested
};

struct RunResult {
    StrategyTag strategy;
    std::uint64_t seed = 0;
    double initial_eval_loss = 0.0;
    std::vector<std::size_t> initial_ranks; ///< empty for full fine-tuning
    std::vector<std::size_t> final_ranks;
    std::vector<RoundRecord> rounds;
    bool complete = true;
    std::string error; ///< set when a divergence cut the run short

    /// Eval loss after the last completed round, or the initial loss.
    double final_eval_loss() const;
};

struct RunOptions {
    bool record_wall_clock = false;
};

/// Runs `cfg.strategy` on `task`. A divergence ends the run early with
/// `complete == false`; other errors propagate.
RunResult run_protocol(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                       const RunOptions& options = {});

/// HetLoRA exactly as configured.
RunResult run_hetlora(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                      const RunOptions& options = {});

/// The HetLoRA engine with r_min = r_max = r, λ = 0, γ = 1 and simple averaging.
RunResult run_homlora(const SyntheticTask& task, std::size_t rank, const ProtocolConfig& cfg, std::uint64_t seed,
                      const RunOptions& options = {});

/// FedAvg on a dense additive ΔW with W₀ frozen.
RunResult run_full_ft(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                      const RunOptions& options = {});

/// Server averages reconstructed ΔWₖ densely and hands each client
/// refactor_svd(average, r_k). Clients do not prune.
RunResult run_recon_svd(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                        const RunOptions& options = {});

/// Starting global module of every LoRA-based run: B = 0, A ~ N(0, init_std²).
LoraPair initial_global_pair(std::size_t d, std::size_t l, std::size_t rank, double init_std, std::uint64_t seed);

/// Seed of client k's batch-sampling stream in a run with `seed`.
std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client);

/// The configuration `run_protocol` actually executes for a HomLoRA tag.
ProtocolConfig homlora_config(const ProtocolConfig& cfg, std::size_t rank);

}  // namespace hetlora
