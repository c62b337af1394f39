#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hetlora/baselines.hpp"
#include "hetlora/harness/config.hpp"
#include "hetlora/harness/records.hpp"

namespace hetlora::harness {

/// One row of a comparison table: a labelled protocol configuration.
struct Arm {
    std::string label;
    ProtocolConfig protocol;
};

/// One arm per entry of `cfg.strategies`, labelled by the strategy tag.
std::vector<Arm> strategy_arms(const ExperimentConfig& cfg);

/// HetLoRA at each γ, other settings from `cfg`.
std::vector<Arm> gamma_ablation_arms(const ExperimentConfig& cfg, std::span<const double> gammas);
inline constexpr double kGammaAblation[] = {1.0, 0.99, 0.95, 0.85};

/// HomLoRA at each rank.
std::vector<Arm> rank_arms(const ExperimentConfig& cfg, std::span<const std::size_t> ranks);

struct ExperimentOptions {
    RunOptions run;
    /// Called once per finished stream, in execution order.
    std::function<void(const RunStream&)> on_stream;
};

/// Every (arm, η, seed) combination. Tasks are generated once per seed and
/// shared by all arms. Streams come back ordered by seed, then arm, then η.
std::vector<RunStream> run_experiment(const ExperimentConfig& cfg, std::span<const Arm> arms,
                                      const ExperimentOptions& options = {});

}  // namespace hetlora::harness
